//! Global strain-displacement operator, stiffness matrices and force vectors.
//!
//! Integration point `q` of element `e` has global index `e * n_q + q`. In 3D
//! each point owns six consecutive rows of `B`; in 2D (plane strain) it owns
//! three, `(e11, e22, 2 e12)`, and only the matching rows/columns `{0, 1, 3}`
//! of the 6 x 6 constitutive blocks enter the stiffness.

use std::time::Instant;

use crate::constitutive::{Block, Voigt};
use crate::error::{FemError, Result};
use crate::linalg::{sandwich_with_transpose, SparseMatrix};
use crate::mesh::Mesh;
use crate::reference_elements::{
    local_basis_face, local_basis_volume, quadrature_face, quadrature_volume, QuadratureRule, ReferenceBasis,
};

/// Voigt components kept in plane strain.
pub const PLANE_STRAIN_COMPONENTS: [usize; 3] = [0, 1, 3];

/// Strain rows per integration point.
pub fn n_strain(dim: usize) -> usize {
    if dim == 2 {
        3
    } else {
        6
    }
}

/// Determinants and inverses (row-major 3 x 3, leading `dim x dim` used) of the
/// element maps at every integration point.
pub fn jacobians(mesh: &Mesh, basis: &ReferenceBasis) -> Result<(Vec<f64>, Vec<[f64; 9]>)> {
    let dim = mesh.dim();
    let (n_p, n_q) = (basis.n_p, basis.n_q);
    if n_p != mesh.n_nodes_per_elem() || basis.dim != dim {
        return Err(FemError::DimensionMismatch(format!(
            "basis has {n_p} functions in {}D, mesh elements have {} nodes in {dim}D",
            basis.dim,
            mesh.n_nodes_per_elem()
        )));
    }
    let n_int = mesh.n_elems() * n_q;
    let mut det = Vec::with_capacity(n_int);
    let mut jinv = Vec::with_capacity(n_int);
    for e in 0..mesh.n_elems() {
        let nodes = mesh.elem(e);
        for q in 0..n_q {
            let mut j = [[0.0; 3]; 3];
            for (p, &node) in nodes.iter().enumerate() {
                let x = &mesh.coords[node];
                for i in 0..dim {
                    let g = basis.grad(i, p, q);
                    for k in 0..dim {
                        j[i][k] += g * x[k];
                    }
                }
            }
            let (d, inv) = if dim == 2 {
                let d = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                (d, [j[1][1] / d, -j[0][1] / d, 0.0, -j[1][0] / d, j[0][0] / d, 0.0, 0.0, 0.0, 0.0])
            } else {
                let c00 = j[1][1] * j[2][2] - j[1][2] * j[2][1];
                let c01 = j[1][2] * j[2][0] - j[1][0] * j[2][2];
                let c02 = j[1][0] * j[2][1] - j[1][1] * j[2][0];
                let d = j[0][0] * c00 + j[0][1] * c01 + j[0][2] * c02;
                let inv = [
                    c00 / d,
                    (j[0][2] * j[2][1] - j[0][1] * j[2][2]) / d,
                    (j[0][1] * j[1][2] - j[0][2] * j[1][1]) / d,
                    c01 / d,
                    (j[0][0] * j[2][2] - j[0][2] * j[2][0]) / d,
                    (j[0][2] * j[1][0] - j[0][0] * j[1][2]) / d,
                    c02 / d,
                    (j[0][1] * j[2][0] - j[0][0] * j[2][1]) / d,
                    (j[0][0] * j[1][1] - j[0][1] * j[1][0]) / d,
                ];
                (d, inv)
            };
            if !(d > 0.0) {
                return Err(FemError::DegenerateElement { element: e, point: q, det: d });
            }
            det.push(d);
            jinv.push(inv);
        }
    }
    Ok((det, jinv))
}

/// Physical gradients of all element basis functions at one point.
#[inline]
fn physical_grads(basis: &ReferenceBasis, jinv: &[f64; 9], dim: usize, q: usize, out: &mut Vec<[f64; 3]>) {
    out.clear();
    for p in 0..basis.n_p {
        let mut g = [0.0; 3];
        for k in 0..dim {
            for i in 0..dim {
                g[k] += jinv[k * 3 + i] * basis.grad(i, p, q);
            }
        }
        out.push(g);
    }
}

/// Global strain-displacement matrix.
pub fn strain_displacement_matrix(mesh: &Mesh, basis: &ReferenceBasis, jinv: &[[f64; 9]]) -> Result<SparseMatrix> {
    let dim = mesh.dim();
    let ns = n_strain(dim);
    let (n_p, n_q) = (basis.n_p, basis.n_q);
    let n_int = mesh.n_elems() * n_q;
    if jinv.len() != n_int {
        return Err(FemError::DimensionMismatch(format!("{} inverse Jacobians for {n_int} points", jinv.len())));
    }
    let per_point = n_p * if dim == 2 { 4 } else { 9 };
    let mut rows = Vec::with_capacity(n_int * per_point);
    let mut cols = Vec::with_capacity(n_int * per_point);
    let mut vals = Vec::with_capacity(n_int * per_point);
    let mut grads = Vec::with_capacity(n_p);
    for e in 0..mesh.n_elems() {
        let nodes = mesh.elem(e);
        for q in 0..n_q {
            let g = e * n_q + q;
            physical_grads(basis, &jinv[g], dim, q, &mut grads);
            let r0 = g * ns;
            for (p, &node) in nodes.iter().enumerate() {
                let d = grads[p];
                let c0 = dim * node;
                let entries: &[(usize, usize, f64)] = if dim == 2 {
                    &[(0, 0, d[0]), (1, 1, d[1]), (2, 0, d[1]), (2, 1, d[0])]
                } else {
                    &[
                        (0, 0, d[0]),
                        (1, 1, d[1]),
                        (2, 2, d[2]),
                        (3, 0, d[1]),
                        (3, 1, d[0]),
                        (4, 1, d[2]),
                        (4, 2, d[1]),
                        (5, 0, d[2]),
                        (5, 2, d[0]),
                    ]
                };
                for &(r, c, v) in entries {
                    rows.push(r0 + r);
                    cols.push(c0 + c);
                    vals.push(v);
                }
            }
        }
    }
    SparseMatrix::from_triplets(&rows, &cols, &vals, n_int * ns, mesh.n_dofs())
}

/// Restriction of a 6 x 6 block to the strain components used in `dim`.
#[inline]
pub fn reduce_block(block: &Block, dim: usize, out: &mut [f64]) {
    if dim == 2 {
        for (a, &j) in PLANE_STRAIN_COMPONENTS.iter().enumerate() {
            for (b, &i) in PLANE_STRAIN_COMPONENTS.iter().enumerate() {
                out[a * 3 + b] = block[j * 6 + i];
            }
        }
    } else {
        out[..36].copy_from_slice(block);
    }
}

/// Block-diagonal matrix whose `q`-th block is `weight[q] * ds[q]` (restricted
/// to the in-plane components in 2D). Flagged symmetric when every block is.
pub fn block_diag_d(ds: &[Block], weight: &[f64], dim: usize) -> Result<SparseMatrix> {
    if ds.len() != weight.len() {
        return Err(FemError::DimensionMismatch(format!("{} blocks for {} weights", ds.len(), weight.len())));
    }
    let ns = n_strain(dim);
    let n = ds.len() * ns;
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(n * ns);
    let mut values = Vec::with_capacity(n * ns);
    let mut sub = [0.0; 36];
    let mut symmetric = true;
    row_ptr.push(0);
    for (q, (block, &w)) in ds.iter().zip(weight).enumerate() {
        reduce_block(block, dim, &mut sub);
        let scale = sub[..ns * ns].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..ns {
            for j in 0..ns {
                col_idx.push(q * ns + j);
                values.push(w * sub[j * ns + i]);
                if (sub[j * ns + i] - sub[i * ns + j]).abs() > 1e-12 * scale {
                    symmetric = false;
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    let mut d = SparseMatrix::from_csr(n, n, row_ptr, col_idx, values)?;
    d.set_symmetric(symmetric);
    Ok(d)
}

/// Per-mesh data computed once and reused by every Newton iteration.
#[derive(Clone, Debug)]
pub struct AssemblyCache {
    pub dim: usize,
    pub n_q: usize,
    pub quadrature: QuadratureRule,
    pub basis: ReferenceBasis,
    pub det: Vec<f64>,
    pub jinv: Vec<[f64; 9]>,
    /// `|det J| * w_q` per integration point.
    pub weight: Vec<f64>,
    pub b: SparseMatrix,
    pub bt: SparseMatrix,
    /// Elastic blocks `C` per integration point (full 6 x 6).
    pub elastic_blocks: Vec<Block>,
    pub d_elast: SparseMatrix,
    pub k_elast: SparseMatrix,
    /// Wall time of the whole construction, in seconds.
    pub elastic_assembly_seconds: f64,
}

impl AssemblyCache {
    /// Builds `B`, the weights, `D_elast` and `K_elast` for the given elastic
    /// blocks (one per integration point).
    pub fn new(mesh: &Mesh, elastic_blocks: Vec<Block>) -> Result<Self> {
        let start = Instant::now();
        let quadrature = quadrature_volume(mesh.elem_type)?;
        let basis = local_basis_volume(mesh.elem_type, &quadrature.points)?;
        let n_q = quadrature.n_points();
        if elastic_blocks.len() != mesh.n_elems() * n_q {
            return Err(FemError::DimensionMismatch(format!(
                "{} elastic blocks for {} integration points",
                elastic_blocks.len(),
                mesh.n_elems() * n_q
            )));
        }
        let (det, jinv) = jacobians(mesh, &basis)?;
        let weight: Vec<f64> = det.iter().enumerate().map(|(g, d)| d.abs() * quadrature.weights[g % n_q]).collect();
        let b = strain_displacement_matrix(mesh, &basis, &jinv)?;
        let bt = b.transpose();
        let d_elast = block_diag_d(&elastic_blocks, &weight, mesh.dim())?;
        let k_elast = sandwich_with_transpose(&bt, &b, &d_elast)?;
        Ok(AssemblyCache {
            dim: mesh.dim(),
            n_q,
            quadrature,
            basis,
            det,
            jinv,
            weight,
            b,
            bt,
            elastic_blocks,
            d_elast,
            k_elast,
            elastic_assembly_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn n_int(&self) -> usize {
        self.weight.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.b.n_cols()
    }

    /// Strains `B u` at every integration point, embedded in 6-component Voigt
    /// form (zero out-of-plane entries in 2D).
    pub fn strain(&self, u: &[f64]) -> Vec<Voigt> {
        let bu = self.b.matvec(u);
        if self.dim == 2 {
            bu.chunks_exact(3).map(|c| [c[0], c[1], 0.0, c[2], 0.0, 0.0]).collect()
        } else {
            bu.chunks_exact(6).map(|c| std::array::from_fn(|i| c[i])).collect()
        }
    }

    /// `B^T (WEIGHT .* S)`.
    pub fn internal_forces(&self, stress: &[Voigt]) -> Result<Vec<f64>> {
        if stress.len() != self.n_int() {
            return Err(FemError::DimensionMismatch(format!(
                "{} stresses for {} integration points",
                stress.len(),
                self.n_int()
            )));
        }
        let ns = n_strain(self.dim);
        let mut ws = Vec::with_capacity(self.n_int() * ns);
        for (s, &w) in stress.iter().zip(&self.weight) {
            if self.dim == 2 {
                ws.extend(PLANE_STRAIN_COMPONENTS.iter().map(|&i| w * s[i]));
            } else {
                ws.extend(s.iter().map(|v| w * v));
            }
        }
        Ok(self.bt.matvec(&ws))
    }

    /// `K_elast + B^T (D_tangent - D_elast) B`, touching only the rows of `B`
    /// that belong to points flagged in `plastic`.
    pub fn assemble_tangent_stiffness(&self, tangent: &[Block], plastic: &[bool]) -> Result<SparseMatrix> {
        let diff = self.tangent_difference(tangent, plastic)?;
        let mut k = self.k_elast.clone();
        if let Some(dk) = diff {
            if !k.accumulate_in_pattern(&dk) {
                k = self.k_elast.add_scaled(1.0, &dk, 1.0)?;
            }
            k.set_symmetric(self.k_elast.is_symmetric() && dk.is_symmetric());
        }
        Ok(k)
    }

    /// `B_p^T (D_tangent - D_elast)_p B_p` over the plastic points, or `None`
    /// when no point is plastic.
    pub fn tangent_difference(&self, tangent: &[Block], plastic: &[bool]) -> Result<Option<SparseMatrix>> {
        let n = self.n_int();
        if tangent.len() != n || plastic.len() != n {
            return Err(FemError::DimensionMismatch(format!(
                "{} tangent blocks and {} flags for {n} points",
                tangent.len(),
                plastic.len()
            )));
        }
        let points: Vec<usize> = (0..n).filter(|&q| plastic[q]).collect();
        if points.is_empty() {
            return Ok(None);
        }
        let ns = n_strain(self.dim);
        let rows: Vec<usize> = points.iter().flat_map(|&q| (q * ns)..(q * ns + ns)).collect();
        let b_p = self.b.select_rows(&rows);
        let blocks: Vec<Block> = points
            .iter()
            .map(|&q| std::array::from_fn(|k| tangent[q][k] - self.elastic_blocks[q][k]))
            .collect();
        let weights: Vec<f64> = points.iter().map(|&q| self.weight[q]).collect();
        let d_p = block_diag_d(&blocks, &weights, self.dim)?;
        let bt_p = b_p.transpose();
        Ok(Some(sandwich_with_transpose(&bt_p, &b_p, &d_p)?))
    }

    /// `B^T D_tangent B` formed directly from all blocks.
    pub fn assemble_direct(&self, tangent: &[Block]) -> Result<SparseMatrix> {
        let d = block_diag_d(tangent, &self.weight, self.dim)?;
        sandwich_with_transpose(&self.bt, &self.b, &d)
    }

    /// Physical coordinates of every integration point.
    pub fn point_coordinates(&self, mesh: &Mesh) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.n_int());
        for e in 0..mesh.n_elems() {
            let nodes = mesh.elem(e);
            for q in 0..self.n_q {
                let mut x = [0.0; 3];
                for (p, &node) in nodes.iter().enumerate() {
                    let phi = self.basis.value(p, q);
                    for i in 0..3 {
                        x[i] += phi * mesh.coords[node][i];
                    }
                }
                out.push(x);
            }
        }
        out
    }
}

/// Position-dependent load density.
pub type LoadField<'a> = &'a dyn Fn(&[f64; 3]) -> [f64; 3];

/// Load vector from a volume force density and a traction on the Neumann faces.
pub fn external_forces(
    mesh: &Mesh,
    cache: &AssemblyCache,
    f_v: Option<LoadField>,
    f_t: Option<LoadField>,
) -> Result<Vec<f64>> {
    let dim = mesh.dim();
    let mut f = vec![0.0; mesh.n_dofs()];
    if let Some(fv) = f_v {
        let xq = cache.point_coordinates(mesh);
        for e in 0..mesh.n_elems() {
            let nodes = mesh.elem(e);
            for q in 0..cache.n_q {
                let g = e * cache.n_q + q;
                let load = fv(&xq[g]);
                for (p, &node) in nodes.iter().enumerate() {
                    let c = cache.weight[g] * cache.basis.value(p, q);
                    for i in 0..dim {
                        f[dim * node + i] += c * load[i];
                    }
                }
            }
        }
    }
    if let Some(ft) = f_t {
        if mesh.neumann_faces.is_empty() {
            return Err(FemError::Config("traction given but the mesh has no Neumann faces".into()));
        }
        let rule = quadrature_face(mesh.elem_type)?;
        let fb = local_basis_face(mesh.elem_type, &rule.points)?;
        let fdim = dim - 1;
        for &(e, face) in &mesh.neumann_faces {
            let nodes = mesh.face_nodes(e, face);
            for q in 0..rule.n_points() {
                let mut x = [0.0; 3];
                let mut t = [[0.0; 3]; 2];
                for (p, &node) in nodes.iter().enumerate() {
                    let c = &mesh.coords[node];
                    for i in 0..3 {
                        x[i] += fb.value(p, q) * c[i];
                        for k in 0..fdim {
                            t[k][i] += fb.grad(k, p, q) * c[i];
                        }
                    }
                }
                let area = if fdim == 1 {
                    (t[0][0] * t[0][0] + t[0][1] * t[0][1]).sqrt()
                } else {
                    let n = [
                        t[0][1] * t[1][2] - t[0][2] * t[1][1],
                        t[0][2] * t[1][0] - t[0][0] * t[1][2],
                        t[0][0] * t[1][1] - t[0][1] * t[1][0],
                    ];
                    (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
                };
                let load = ft(&x);
                let w = rule.weights[q] * area;
                for (p, &node) in nodes.iter().enumerate() {
                    let c = w * fb.value(p, q);
                    for i in 0..dim {
                        f[dim * node + i] += c * load[i];
                    }
                }
            }
        }
    }
    Ok(f)
}
