//! Structured meshes of the two benchmark geometries, in 2D and extruded 3D.
//!
//! Nodes live on a lattice refined once more for quadratic elements, and are
//! numbered lexicographically by `(x3, x2, x1)`. Degrees of freedom are
//! interleaved: dof `dim * node + i` is component `i` of node `node`.
//! Indices are zero-based throughout.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{FemError, Result};
use crate::reference_elements::{ElementType, Family};

/// Refinement level at which the footing mesh has 320 x 320 (linear) or
/// 160 x 160 (quadratic) cells.
pub const FOOTING_REFERENCE_LEVEL: u32 = 5;

/// Side length of both benchmark domains.
pub const DOMAIN_SIZE: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub elem_type: ElementType,
    /// Node coordinates; the third entry is zero in 2D.
    pub coords: Vec<[f64; 3]>,
    /// Element connectivity, `n_p` consecutive node indices per element.
    pub elems: Vec<usize>,
    /// Free-dof mask, `dim * n_nodes` entries.
    pub free: Vec<bool>,
    /// Prescribed displacements at unit load factor, zero on free dofs.
    pub dirichlet_values: Vec<f64>,
    /// `(element, local face)` pairs carrying traction.
    pub neumann_faces: Vec<(usize, usize)>,
    /// Nodes under the rigid footing (empty for other geometries).
    pub footing_nodes: Vec<usize>,
}

/// Generator knobs beyond the refinement level.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshOptions {
    /// Element layers through the unit thickness of 3D meshes. By default the
    /// layer height matches the in-plane cell size.
    pub layers: Option<usize>,
    /// Also fix the horizontal displacement under the footing.
    pub rough_footing: bool,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions { layers: None, rough_footing: true }
    }
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.elem_type.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_nodes_per_elem(&self) -> usize {
        self.elem_type.n_nodes()
    }

    pub fn n_elems(&self) -> usize {
        self.elems.len() / self.n_nodes_per_elem()
    }

    pub fn n_dofs(&self) -> usize {
        self.dim() * self.n_nodes()
    }

    #[inline]
    pub fn elem(&self, e: usize) -> &[usize] {
        let n_p = self.n_nodes_per_elem();
        &self.elems[e * n_p..(e + 1) * n_p]
    }

    /// Global node indices of local face `f` of element `e`.
    pub fn face_nodes(&self, e: usize, f: usize) -> Vec<usize> {
        let el = self.elem(e);
        self.elem_type.faces()[f].iter().map(|&l| el[l]).collect()
    }

    /// Number of elements sharing each face, keyed by the sorted face node list.
    pub fn face_incidence(&self) -> HashMap<Vec<usize>, Vec<(usize, usize)>> {
        let faces = self.elem_type.faces();
        let mut map: HashMap<Vec<usize>, Vec<(usize, usize)>> = HashMap::new();
        for e in 0..self.n_elems() {
            let el = self.elem(e);
            for (f, loc) in faces.iter().enumerate() {
                let mut key: Vec<usize> = loc.iter().map(|&l| el[l]).collect();
                key.sort_unstable();
                map.entry(key).or_default().push((e, f));
            }
        }
        map
    }

    /// Faces owned by exactly one element.
    pub fn boundary_faces(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> =
            self.face_incidence().into_values().filter(|v| v.len() == 1).map(|v| v[0]).collect();
        out.sort_unstable();
        out
    }

    /// Nodes lying on some boundary face, sorted.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut on = vec![false; self.n_nodes()];
        for (e, f) in self.boundary_faces() {
            for n in self.face_nodes(e, f) {
                on[n] = true;
            }
        }
        (0..self.n_nodes()).filter(|&n| on[n]).collect()
    }

    /// Checks index ranges, Dirichlet consistency and that no face is shared by
    /// more than two elements.
    pub fn validate(&self) -> Result<()> {
        let n_p = self.n_nodes_per_elem();
        if self.elems.len() % n_p != 0 {
            return Err(FemError::MeshFormat(format!("connectivity length {} is not a multiple of {n_p}", self.elems.len())));
        }
        if let Some(&bad) = self.elems.iter().find(|&&n| n >= self.n_nodes()) {
            return Err(FemError::MeshFormat(format!("node index {bad} out of range")));
        }
        if self.free.len() != self.n_dofs() || self.dirichlet_values.len() != self.n_dofs() {
            return Err(FemError::MeshFormat("dof arrays do not match the node count".into()));
        }
        for (i, (&fr, &v)) in self.free.iter().zip(&self.dirichlet_values).enumerate() {
            if !v.is_finite() || (fr && v != 0.0) {
                return Err(FemError::MeshFormat(format!("inconsistent Dirichlet value {v} at dof {i}")));
            }
        }
        let n_faces = self.elem_type.faces().len();
        if let Some(&(e, f)) = self.neumann_faces.iter().find(|&&(e, f)| e >= self.n_elems() || f >= n_faces) {
            return Err(FemError::MeshFormat(format!("Neumann face ({e}, {f}) out of range")));
        }
        if let Some((key, _)) = self.face_incidence().into_iter().find(|(_, v)| v.len() > 2) {
            return Err(FemError::MeshFormat(format!("face {key:?} is shared by more than two elements")));
        }
        Ok(())
    }

    /// Writes the plain-text mesh format (see the repository README).
    pub fn to_text(&self) -> String {
        let dim = self.dim();
        let mut s = String::new();
        let _ = writeln!(s, "epfem-mesh 1");
        let _ = writeln!(s, "element {} {}", self.elem_type.family, dim);
        let _ = writeln!(s, "nodes {}", self.n_nodes());
        for (i, x) in self.coords.iter().enumerate() {
            let _ = write!(s, "{i}");
            for v in &x[..dim] {
                let _ = write!(s, " {v:e}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "elements {}", self.n_elems());
        for e in 0..self.n_elems() {
            let _ = write!(s, "{e}");
            for n in self.elem(e) {
                let _ = write!(s, " {n}");
            }
            s.push('\n');
        }
        let constrained: Vec<usize> = (0..self.n_dofs()).filter(|&i| !self.free[i]).collect();
        let _ = writeln!(s, "dirichlet {}", constrained.len());
        for i in constrained {
            let _ = writeln!(s, "{} {} {:e}", i / dim, i % dim, self.dirichlet_values[i]);
        }
        let _ = writeln!(s, "neumann {}", self.neumann_faces.len());
        for (e, f) in &self.neumann_faces {
            let _ = writeln!(s, "{e} {f}");
        }
        let _ = writeln!(s, "footing {}", self.footing_nodes.len());
        for n in &self.footing_nodes {
            let _ = writeln!(s, "{n}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Mesh> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| lines.next().ok_or_else(|| FemError::MeshFormat(format!("missing {what}")));
        let bad = |l: &str| FemError::MeshFormat(format!("cannot parse line '{l}'"));

        if next("header")? != "epfem-mesh 1" {
            return Err(FemError::MeshFormat("unknown header".into()));
        }
        let l = next("element line")?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() != 3 || tok[0] != "element" {
            return Err(bad(l));
        }
        let family: Family = tok[1].parse()?;
        let dim: usize = tok[2].parse().map_err(|_| bad(l))?;
        let elem_type = ElementType::new(family, dim)?;

        fn count(line: &str, name: &str) -> Result<usize> {
            let mut it = line.split_whitespace();
            if it.next() != Some(name) {
                return Err(FemError::MeshFormat(format!("expected section '{name}', got '{line}'")));
            }
            it.next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| FemError::MeshFormat(format!("bad section line '{line}'")))
        }
        fn nums<T: std::str::FromStr>(line: &str, n: usize) -> Result<Vec<T>> {
            let v: Vec<T> = line.split_whitespace().map(|t| t.parse::<T>()).collect::<std::result::Result<_, _>>()
                .map_err(|_| FemError::MeshFormat(format!("cannot parse line '{line}'")))?;
            if v.len() != n {
                return Err(FemError::MeshFormat(format!("expected {n} values in '{line}'")));
            }
            Ok(v)
        }

        let n_nodes = count(next("nodes")?, "nodes")?;
        let mut coords = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let l = next("node")?;
            let mut it = l.split_whitespace();
            it.next();
            let v: Vec<f64> = nums(&it.collect::<Vec<_>>().join(" "), dim)?;
            let mut x = [0.0; 3];
            x[..dim].copy_from_slice(&v);
            coords.push(x);
        }
        let n_elems = count(next("elements")?, "elements")?;
        let n_p = elem_type.n_nodes();
        let mut elems = Vec::with_capacity(n_elems * n_p);
        for _ in 0..n_elems {
            let v: Vec<usize> = nums(next("element")?, n_p + 1)?;
            elems.extend_from_slice(&v[1..]);
        }
        let mut free = vec![true; dim * n_nodes];
        let mut dirichlet_values = vec![0.0; dim * n_nodes];
        let n_dir = count(next("dirichlet")?, "dirichlet")?;
        for _ in 0..n_dir {
            let l = next("dirichlet entry")?;
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 3 {
                return Err(bad(l));
            }
            let node: usize = t[0].parse().map_err(|_| bad(l))?;
            let comp: usize = t[1].parse().map_err(|_| bad(l))?;
            let val: f64 = t[2].parse().map_err(|_| bad(l))?;
            if node >= n_nodes || comp >= dim {
                return Err(bad(l));
            }
            free[dim * node + comp] = false;
            dirichlet_values[dim * node + comp] = val;
        }
        let n_neu = count(next("neumann")?, "neumann")?;
        let mut neumann_faces = Vec::with_capacity(n_neu);
        for _ in 0..n_neu {
            let v: Vec<usize> = nums(next("neumann entry")?, 2)?;
            neumann_faces.push((v[0], v[1]));
        }
        let n_foot = count(next("footing")?, "footing")?;
        let mut footing_nodes = Vec::with_capacity(n_foot);
        for _ in 0..n_foot {
            footing_nodes.push(nums::<usize>(next("footing entry")?, 1)?[0]);
        }
        let mesh = Mesh { elem_type, coords, elems, free, dirichlet_values, neumann_faces, footing_nodes };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Mesh> {
        Mesh::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Coordinates and connectivity of a structured grid of boxes, each box kept or
/// dropped by `keep(cell)`.
fn structured_grid(
    elem_type: ElementType,
    cells: [usize; 3],
    size: [f64; 3],
    keep: impl Fn([usize; 3]) -> bool,
) -> (Vec<[f64; 3]>, Vec<usize>) {
    let dim = elem_type.dim;
    let m = if elem_type.family.is_quadratic() { 2 } else { 1 };
    let cells = if dim == 2 { [cells[0], cells[1], 1] } else { cells };
    let lat = [m * cells[0] + 1, m * cells[1] + 1, if dim == 2 { 1 } else { m * cells[2] + 1 }];
    let lin = |p: [usize; 3]| (p[2] * lat[1] + p[1]) * lat[0] + p[0];
    let ref_nodes = elem_type.reference_nodes();

    // Each element as a list of lattice points in local node order.
    let mut elem_pts: Vec<[usize; 3]> = Vec::new();
    let corner = |c: [usize; 3], bits: [usize; 3]| -> [f64; 3] {
        std::array::from_fn(|a| (m * (c[a] + bits[a])) as f64)
    };
    let push_simplex = |verts: &mut Vec<[f64; 3]>, out: &mut Vec<[usize; 3]>| {
        let d = |a: usize, i: usize| verts[a][i] - verts[0][i];
        let det = if dim == 2 {
            d(1, 0) * d(2, 1) - d(1, 1) * d(2, 0)
        } else {
            let r = |k: usize| [verts[k][0] - verts[0][0], verts[k][1] - verts[0][1], verts[k][2] - verts[0][2]];
            let (a, b, c) = (r(1), r(2), r(3));
            a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0])
        };
        if det < 0.0 {
            verts.swap(1, 2);
        }
        for xi in &ref_nodes {
            let p: [usize; 3] = std::array::from_fn(|i| {
                let mut x = verts[0][i];
                for k in 0..dim {
                    x += xi[k] * (verts[k + 1][i] - verts[0][i]);
                }
                x.round() as usize
            });
            out.push(p);
        }
    };

    for k in 0..cells[2] {
        for j in 0..cells[1] {
            for i in 0..cells[0] {
                let c = [i, j, k];
                if !keep(c) {
                    continue;
                }
                match (elem_type.is_simplex(), dim) {
                    (false, _) => {
                        for xi in &ref_nodes {
                            let p: [usize; 3] = std::array::from_fn(|a| {
                                if a < dim {
                                    m * c[a] + ((xi[a] + 1.0) * 0.5 * m as f64).round() as usize
                                } else {
                                    0
                                }
                            });
                            elem_pts.push(p);
                        }
                    }
                    (true, 2) => {
                        for tri in [[[0, 0, 0], [1, 0, 0], [1, 1, 0]], [[0, 0, 0], [1, 1, 0], [0, 1, 0]]] {
                            let mut v: Vec<[f64; 3]> = tri.iter().map(|&b| corner(c, b)).collect();
                            for p in v.iter_mut() {
                                p[2] = 0.0;
                            }
                            push_simplex(&mut v, &mut elem_pts);
                        }
                    }
                    (true, _) => {
                        // Kuhn split: six tetrahedra around the main diagonal.
                        for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
                            let mut b1 = [0; 3];
                            b1[perm[0]] = 1;
                            let mut b2 = b1;
                            b2[perm[1]] = 1;
                            let mut v = vec![corner(c, [0, 0, 0]), corner(c, b1), corner(c, b2), corner(c, [1, 1, 1])];
                            push_simplex(&mut v, &mut elem_pts);
                        }
                    }
                }
            }
        }
    }

    let mut id = vec![usize::MAX; lat[0] * lat[1] * lat[2]];
    for p in &elem_pts {
        id[lin(*p)] = 0;
    }
    let mut coords = Vec::new();
    let h: [f64; 3] = std::array::from_fn(|a| if a < dim { size[a] / (m * cells[a]) as f64 } else { 0.0 });
    let mut next = 0;
    for k in 0..lat[2] {
        for j in 0..lat[1] {
            for i in 0..lat[0] {
                let l = lin([i, j, k]);
                if id[l] == 0 {
                    id[l] = next;
                    next += 1;
                    coords.push([i as f64 * h[0], j as f64 * h[1], k as f64 * h[2]]);
                }
            }
        }
    }
    let elems = elem_pts.iter().map(|p| id[lin(*p)]).collect();
    (coords, elems)
}

/// Cells per unit length for the elastic-body and von Mises meshes.
fn body_density(level: u32) -> usize {
    1usize << level
}

/// Cells per side of the footing domain.
pub fn footing_cells_per_side(level: u32, family: Family) -> usize {
    let base = if family.is_quadratic() { 5 } else { 10 };
    base << level
}

fn layers(opts: &MeshOptions, cells_per_unit: usize) -> usize {
    opts.layers.unwrap_or(cells_per_unit).max(1)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * DOMAIN_SIZE
}

fn faces_where(mesh: &Mesh, pred: impl Fn(&[f64; 3]) -> bool) -> Vec<(usize, usize)> {
    let faces = mesh.elem_type.faces();
    let mut out = Vec::new();
    for e in 0..mesh.n_elems() {
        let el = mesh.elem(e);
        for (f, loc) in faces.iter().enumerate() {
            if loc.iter().all(|&l| pred(&mesh.coords[el[l]])) {
                out.push((e, f));
            }
        }
    }
    out
}

fn constrain(mesh: &mut Mesh, node: usize, comp: usize, value: f64) {
    let i = mesh.dim() * node + comp;
    mesh.free[i] = false;
    mesh.dirichlet_values[i] = value;
}

fn empty_mesh(elem_type: ElementType, coords: Vec<[f64; 3]>, elems: Vec<usize>) -> Mesh {
    let n = elem_type.dim * coords.len();
    Mesh {
        elem_type,
        coords,
        elems,
        free: vec![true; n],
        dirichlet_values: vec![0.0; n],
        neumann_faces: Vec::new(),
        footing_nodes: Vec::new(),
    }
}

/// L-shaped body: the 10 x 10 square without its lower-left 5 x 5 quarter,
/// extruded to unit thickness in 3D.
///
/// Dirichlet data at unit load factor: `u1 = 0` on the left edge, `u2 = 0` and
/// `u1 = 1/2` on the bottom edge, `u3 = 0` on both `x3` faces. The top edge
/// carries traction.
pub fn build_mesh_elastic_body(level: u32, elem_type: ElementType) -> Result<Mesh> {
    build_mesh_elastic_body_with(level, elem_type, &MeshOptions::default())
}

pub fn build_mesh_elastic_body_with(level: u32, elem_type: ElementType, opts: &MeshOptions) -> Result<Mesh> {
    ElementType::new(elem_type.family, elem_type.dim)?;
    let d = body_density(level);
    let n = 10 * d;
    let half = 5 * d;
    let nz = layers(opts, d);
    let (coords, elems) =
        structured_grid(elem_type, [n, n, nz], [DOMAIN_SIZE, DOMAIN_SIZE, 1.0], |c| c[0] >= half || c[1] >= half);
    let mut mesh = empty_mesh(elem_type, coords, elems);
    let dim = elem_type.dim;
    for node in 0..mesh.n_nodes() {
        let x = mesh.coords[node];
        if close(x[0], 0.0) {
            constrain(&mut mesh, node, 0, 0.0);
        }
        if close(x[1], 0.0) {
            constrain(&mut mesh, node, 1, 0.0);
            constrain(&mut mesh, node, 0, 0.5);
        }
        if dim == 3 && (close(x[2], 0.0) || close(x[2], 1.0)) {
            constrain(&mut mesh, node, 2, 0.0);
        }
    }
    mesh.neumann_faces = faces_where(&mesh, |x| close(x[1], DOMAIN_SIZE));
    Ok(mesh)
}

/// Strip footing: the 10 x 10 square (unit-thickness slab in 3D) with a rigid
/// footing over `x1 in [0, 1]` on the top edge.
///
/// Dirichlet data at unit load factor: zero normal displacement on the left,
/// right and bottom sides, `u2 = -1` under the footing (plus `u1 = 0` for a
/// rough footing), `u3 = 0` on both `x3` faces.
pub fn build_mesh_footing(level: u32, elem_type: ElementType) -> Result<Mesh> {
    build_mesh_footing_with(level, elem_type, &MeshOptions::default())
}

pub fn build_mesh_footing_with(level: u32, elem_type: ElementType, opts: &MeshOptions) -> Result<Mesh> {
    ElementType::new(elem_type.family, elem_type.dim)?;
    let n = footing_cells_per_side(level, elem_type.family);
    let nz = layers(opts, n.div_ceil(10));
    let (coords, elems) = structured_grid(elem_type, [n, n, nz], [DOMAIN_SIZE, DOMAIN_SIZE, 1.0], |_| true);
    let mut mesh = empty_mesh(elem_type, coords, elems);
    let dim = elem_type.dim;
    for node in 0..mesh.n_nodes() {
        let x = mesh.coords[node];
        if close(x[0], 0.0) || close(x[0], DOMAIN_SIZE) {
            constrain(&mut mesh, node, 0, 0.0);
        }
        if close(x[1], 0.0) {
            constrain(&mut mesh, node, 1, 0.0);
        }
        if close(x[1], DOMAIN_SIZE) && x[0] <= 1.0 + 1e-9 * DOMAIN_SIZE {
            constrain(&mut mesh, node, 1, -1.0);
            if opts.rough_footing {
                constrain(&mut mesh, node, 0, 0.0);
            }
            mesh.footing_nodes.push(node);
        }
        if dim == 3 && (close(x[2], 0.0) || close(x[2], 1.0)) {
            constrain(&mut mesh, node, 2, 0.0);
        }
    }
    Ok(mesh)
}
