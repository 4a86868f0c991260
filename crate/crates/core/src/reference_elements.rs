//! Reference cells, Lagrange basis functions and quadrature rules.
//!
//! Supported families are linear/quadratic simplices (P1, P2) and
//! linear/serendipity-quadratic tensor cells (Q1, Q2) in two and three
//! dimensions. Reference tetrahedra and triangles are the unit simplices with a
//! vertex at the origin; reference hexahedra and quadrilaterals are `[-1, 1]^d`.
//!
//! Points are stored as `[f64; 3]` regardless of dimension; unused trailing
//! coordinates are zero.

use std::fmt;
use std::str::FromStr;

use crate::error::{FemError, Result};

/// Polynomial family of an element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    P1,
    P2,
    Q1,
    Q2,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::P1, Family::P2, Family::Q1, Family::Q2];

    pub fn is_simplex(self) -> bool {
        matches!(self, Family::P1 | Family::P2)
    }

    pub fn is_quadratic(self) -> bool {
        matches!(self, Family::P2 | Family::Q2)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::P1 => "P1",
            Family::P2 => "P2",
            Family::Q1 => "Q1",
            Family::Q2 => "Q2",
        };
        f.write_str(s)
    }
}

impl FromStr for Family {
    type Err = FemError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "P1" => Ok(Family::P1),
            "P2" => Ok(Family::P2),
            "Q1" => Ok(Family::Q1),
            "Q2" => Ok(Family::Q2),
            other => Err(FemError::InvalidElement(format!("unknown element family '{other}'"))),
        }
    }
}

/// An element family together with the spatial dimension it lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ElementType {
    pub family: Family,
    pub dim: usize,
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}D)", self.family, self.dim)
    }
}

impl ElementType {
    pub fn new(family: Family, dim: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(FemError::InvalidElement(format!(
                "{family} elements are available in 2D and 3D only, got dim = {dim}"
            )));
        }
        Ok(ElementType { family, dim })
    }

    /// All eight supported (family, dimension) combinations.
    pub fn all() -> Vec<ElementType> {
        let mut out = Vec::with_capacity(8);
        for dim in [2, 3] {
            for family in Family::ALL {
                out.push(ElementType { family, dim });
            }
        }
        out
    }

    pub fn n_nodes(&self) -> usize {
        self.shape().n_nodes()
    }

    pub fn n_vertices(&self) -> usize {
        match (self.family.is_simplex(), self.dim) {
            (true, 2) => 3,
            (true, _) => 4,
            (false, 2) => 4,
            (false, _) => 8,
        }
    }

    pub fn is_simplex(&self) -> bool {
        self.family.is_simplex()
    }

    /// Measure of the reference cell.
    pub fn reference_measure(&self) -> f64 {
        self.shape().measure()
    }

    /// Reference coordinates of the element nodes, in local node order.
    pub fn reference_nodes(&self) -> Vec<[f64; 3]> {
        self.shape().nodes()
    }

    /// Local node indices of every boundary face (edge in 2D), ordered so that
    /// each list follows the node order of the face element.
    pub fn faces(&self) -> Vec<Vec<usize>> {
        let full: &[&[usize]] = match (self.family.is_simplex(), self.dim) {
            (true, 2) => &[&[0, 1, 3], &[1, 2, 4], &[2, 0, 5]],
            (false, 2) => &[&[0, 1, 4], &[1, 2, 5], &[2, 3, 6], &[3, 0, 7]],
            (true, _) => &[&[0, 1, 2, 4, 5, 6], &[0, 1, 3, 4, 7, 9], &[0, 2, 3, 6, 8, 9], &[1, 2, 3, 5, 8, 7]],
            (false, _) => &[
                &[0, 1, 2, 3, 8, 9, 10, 11],
                &[4, 5, 6, 7, 12, 13, 14, 15],
                &[0, 1, 5, 4, 8, 17, 12, 16],
                &[1, 2, 6, 5, 9, 18, 13, 17],
                &[2, 3, 7, 6, 10, 19, 14, 18],
                &[3, 0, 4, 7, 11, 16, 15, 19],
            ],
        };
        let n = self.face_shape().n_nodes();
        full.iter().map(|f| f[..n].to_vec()).collect()
    }

    pub fn n_face_nodes(&self) -> usize {
        self.face_shape().n_nodes()
    }

    pub(crate) fn shape(&self) -> Shape {
        match (self.family, self.dim) {
            (Family::P1, 2) => Shape::TriLinear,
            (Family::P2, 2) => Shape::TriQuadratic,
            (Family::Q1, 2) => Shape::QuadLinear,
            (Family::Q2, 2) => Shape::QuadSerendipity,
            (Family::P1, _) => Shape::TetLinear,
            (Family::P2, _) => Shape::TetQuadratic,
            (Family::Q1, _) => Shape::HexLinear,
            (Family::Q2, _) => Shape::HexSerendipity,
        }
    }

    pub(crate) fn face_shape(&self) -> Shape {
        match (self.family, self.dim) {
            (Family::P1, 2) => Shape::SegmentUnitLinear,
            (Family::P2, 2) => Shape::SegmentUnitQuadratic,
            (Family::Q1, 2) => Shape::SegmentLinear,
            (Family::Q2, 2) => Shape::SegmentQuadratic,
            (Family::P1, _) => Shape::TriLinear,
            (Family::P2, _) => Shape::TriQuadratic,
            (Family::Q1, _) => Shape::QuadLinear,
            (Family::Q2, _) => Shape::QuadSerendipity,
        }
    }
}

/// Quadrature points (reference coordinates) and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub dim: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    /// Applies the rule to `g`.
    pub fn integrate(&self, g: impl Fn(&[f64; 3]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * g(p)).sum()
    }
}

/// Basis values and reference gradients evaluated at a set of points.
///
/// Storage is point-major: entry `(p, q)` lives at `q * n_p + p`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceBasis {
    pub dim: usize,
    pub n_p: usize,
    pub n_q: usize,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 3]>,
}

impl ReferenceBasis {
    #[inline]
    pub fn value(&self, p: usize, q: usize) -> f64 {
        self.values[q * self.n_p + p]
    }

    /// Derivative of basis function `p` with respect to reference coordinate `i` at point `q`.
    #[inline]
    pub fn grad(&self, i: usize, p: usize, q: usize) -> f64 {
        self.grads[q * self.n_p + p][i]
    }
}

/// Volume quadrature rule used for the given element.
pub fn quadrature_volume(elem: ElementType) -> Result<QuadratureRule> {
    ElementType::new(elem.family, elem.dim)?;
    Ok(elem.shape().volume_rule())
}

/// Evaluates the element basis at arbitrary reference points.
pub fn local_basis_volume(elem: ElementType, points: &[[f64; 3]]) -> Result<ReferenceBasis> {
    ElementType::new(elem.family, elem.dim)?;
    Ok(elem.shape().evaluate(points))
}

/// Quadrature rule on the reference face (segment in 2D, triangle or square in 3D).
pub fn quadrature_face(elem: ElementType) -> Result<QuadratureRule> {
    ElementType::new(elem.family, elem.dim)?;
    Ok(elem.face_shape().face_rule())
}

/// Evaluates the face restriction of the element basis at reference face points.
pub fn local_basis_face(elem: ElementType, points: &[[f64; 3]]) -> Result<ReferenceBasis> {
    ElementType::new(elem.family, elem.dim)?;
    Ok(elem.face_shape().evaluate(points))
}

/// Concrete reference cells, including the lower-dimensional ones used for faces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Shape {
    /// `[0, 1]`, nodes 0, 1.
    SegmentUnitLinear,
    /// `[0, 1]`, nodes 0, 1, 1/2.
    SegmentUnitQuadratic,
    /// `[-1, 1]`, nodes -1, 1.
    SegmentLinear,
    /// `[-1, 1]`, nodes -1, 1, 0.
    SegmentQuadratic,
    TriLinear,
    TriQuadratic,
    QuadLinear,
    QuadSerendipity,
    TetLinear,
    TetQuadratic,
    HexLinear,
    HexSerendipity,
}

const TRI_EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (0, 2)];
const TET_EDGES: [(usize, usize); 6] = [(0, 1), (1, 2), (0, 2), (1, 3), (2, 3), (0, 3)];
const QUAD_CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
const QUAD_MIDS: [[f64; 2]; 4] = [[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];
const HEX_CORNERS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];
const HEX_MIDS: [[f64; 3]; 12] = [
    [0.0, -1.0, -1.0],
    [1.0, 0.0, -1.0],
    [0.0, 1.0, -1.0],
    [-1.0, 0.0, -1.0],
    [0.0, -1.0, 1.0],
    [1.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [-1.0, 0.0, 1.0],
    [-1.0, -1.0, 0.0],
    [1.0, -1.0, 0.0],
    [1.0, 1.0, 0.0],
    [-1.0, 1.0, 0.0],
];

/// Gauss-Legendre points and weights on `[-1, 1]`.
fn gauss_1d(n: usize) -> (Vec<f64>, Vec<f64>) {
    match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        _ => unreachable!("only 1- to 3-point Gauss rules are tabulated"),
    }
}

fn tensor_rule(dim: usize, n: usize) -> QuadratureRule {
    let (x, w) = gauss_1d(n);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match dim {
        1 => {
            for i in 0..n {
                points.push([x[i], 0.0, 0.0]);
                weights.push(w[i]);
            }
        }
        2 => {
            for j in 0..n {
                for i in 0..n {
                    points.push([x[i], x[j], 0.0]);
                    weights.push(w[i] * w[j]);
                }
            }
        }
        _ => {
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        points.push([x[i], x[j], x[k]]);
                        weights.push(w[i] * w[j] * w[k]);
                    }
                }
            }
        }
    }
    QuadratureRule { dim, points, weights }
}

/// Gauss rule on `[0, 1]`.
fn unit_segment_rule(n: usize) -> QuadratureRule {
    let (x, w) = gauss_1d(n);
    QuadratureRule {
        dim: 1,
        points: x.iter().map(|t| [0.5 * (1.0 + t), 0.0, 0.0]).collect(),
        weights: w.iter().map(|w| 0.5 * w).collect(),
    }
}

/// 11-point tetrahedral rule, exact for polynomials of total degree 4.
fn tet_rule_11() -> QuadratureRule {
    const A: f64 = 0.250000000000000;
    const B: f64 = 0.071428571428571;
    const C: f64 = 0.785714285714286;
    const D: f64 = 0.399403576166799;
    const E: f64 = 0.100596423833201;
    const W1: f64 = -0.013155555555555;
    const W2: f64 = 0.007622222222222;
    const W3: f64 = 0.024888888888888;
    QuadratureRule {
        dim: 3,
        points: vec![
            [A, A, A],
            [B, B, B],
            [C, B, B],
            [B, C, B],
            [B, B, C],
            [D, E, E],
            [E, D, E],
            [E, E, D],
            [D, D, E],
            [D, E, D],
            [E, D, D],
        ],
        weights: vec![W1, W2, W2, W2, W2, W3, W3, W3, W3, W3, W3],
    }
}

/// 6-point triangle rule, exact for total degree 4.
fn tri_rule_6() -> QuadratureRule {
    const A: f64 = 0.445_948_490_915_964_886;
    const B: f64 = 0.091_576_213_509_770_743;
    const WA: f64 = 0.223_381_589_678_011_466 / 2.0;
    const WB: f64 = 0.109_951_743_655_321_868 / 2.0;
    QuadratureRule {
        dim: 2,
        points: vec![
            [A, A, 0.0],
            [1.0 - 2.0 * A, A, 0.0],
            [A, 1.0 - 2.0 * A, 0.0],
            [B, B, 0.0],
            [1.0 - 2.0 * B, B, 0.0],
            [B, 1.0 - 2.0 * B, 0.0],
        ],
        weights: vec![WA, WA, WA, WB, WB, WB],
    }
}

impl Shape {
    pub(crate) fn dim(self) -> usize {
        use Shape::*;
        match self {
            SegmentUnitLinear | SegmentUnitQuadratic | SegmentLinear | SegmentQuadratic => 1,
            TriLinear | TriQuadratic | QuadLinear | QuadSerendipity => 2,
            TetLinear | TetQuadratic | HexLinear | HexSerendipity => 3,
        }
    }

    pub(crate) fn n_nodes(self) -> usize {
        use Shape::*;
        match self {
            SegmentUnitLinear | SegmentLinear => 2,
            SegmentUnitQuadratic | SegmentQuadratic => 3,
            TriLinear => 3,
            TriQuadratic => 6,
            QuadLinear => 4,
            QuadSerendipity => 8,
            TetLinear => 4,
            TetQuadratic => 10,
            HexLinear => 8,
            HexSerendipity => 20,
        }
    }

    fn measure(self) -> f64 {
        use Shape::*;
        match self {
            SegmentUnitLinear | SegmentUnitQuadratic => 1.0,
            SegmentLinear | SegmentQuadratic => 2.0,
            TriLinear | TriQuadratic => 0.5,
            QuadLinear | QuadSerendipity => 4.0,
            TetLinear | TetQuadratic => 1.0 / 6.0,
            HexLinear | HexSerendipity => 8.0,
        }
    }

    fn nodes(self) -> Vec<[f64; 3]> {
        use Shape::*;
        match self {
            SegmentUnitLinear => vec![[0.0; 3], [1.0, 0.0, 0.0]],
            SegmentUnitQuadratic => vec![[0.0; 3], [1.0, 0.0, 0.0], [0.5, 0.0, 0.0]],
            SegmentLinear => vec![[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            SegmentQuadratic => vec![[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0; 3]],
            TriLinear | TriQuadratic | TetLinear | TetQuadratic => {
                let d = self.dim();
                let mut v = vec![[0.0; 3]];
                for k in 0..d {
                    let mut p = [0.0; 3];
                    p[k] = 1.0;
                    v.push(p);
                }
                if self == TriQuadratic || self == TetQuadratic {
                    let edges: &[(usize, usize)] = if d == 2 { &TRI_EDGES } else { &TET_EDGES };
                    let verts = v.clone();
                    for &(a, b) in edges {
                        let mut m = [0.0; 3];
                        for i in 0..3 {
                            m[i] = 0.5 * (verts[a][i] + verts[b][i]);
                        }
                        v.push(m);
                    }
                }
                v
            }
            QuadLinear | QuadSerendipity => {
                let mut v: Vec<[f64; 3]> = QUAD_CORNERS.iter().map(|c| [c[0], c[1], 0.0]).collect();
                if self == QuadSerendipity {
                    v.extend(QUAD_MIDS.iter().map(|c| [c[0], c[1], 0.0]));
                }
                v
            }
            HexLinear => HEX_CORNERS.to_vec(),
            HexSerendipity => {
                let mut v = HEX_CORNERS.to_vec();
                v.extend_from_slice(&HEX_MIDS);
                v
            }
        }
    }

    fn volume_rule(self) -> QuadratureRule {
        use Shape::*;
        match self {
            TetLinear => QuadratureRule { dim: 3, points: vec![[0.25, 0.25, 0.25]], weights: vec![1.0 / 6.0] },
            TetQuadratic => tet_rule_11(),
            HexLinear => tensor_rule(3, 2),
            HexSerendipity => tensor_rule(3, 3),
            TriLinear => QuadratureRule { dim: 2, points: vec![[1.0 / 3.0, 1.0 / 3.0, 0.0]], weights: vec![0.5] },
            TriQuadratic => QuadratureRule {
                dim: 2,
                points: vec![[0.5, 0.0, 0.0], [0.5, 0.5, 0.0], [0.0, 0.5, 0.0]],
                weights: vec![1.0 / 6.0; 3],
            },
            QuadLinear => tensor_rule(2, 2),
            QuadSerendipity => tensor_rule(2, 3),
            SegmentUnitLinear => unit_segment_rule(1),
            SegmentUnitQuadratic => unit_segment_rule(2),
            SegmentLinear => tensor_rule(1, 2),
            SegmentQuadratic => tensor_rule(1, 3),
        }
    }

    /// Rule used when this shape appears as a boundary face.
    fn face_rule(self) -> QuadratureRule {
        match self {
            Shape::TriLinear => self.volume_rule(),
            // the quadratic tetrahedron integrates to degree 4, so its faces do too
            Shape::TriQuadratic => tri_rule_6(),
            _ => self.volume_rule(),
        }
    }

    fn evaluate(self, points: &[[f64; 3]]) -> ReferenceBasis {
        let n_p = self.n_nodes();
        let mut values = Vec::with_capacity(n_p * points.len());
        let mut grads = Vec::with_capacity(n_p * points.len());
        for x in points {
            self.eval_point(x, &mut values, &mut grads);
        }
        ReferenceBasis { dim: self.dim(), n_p, n_q: points.len(), values, grads }
    }

    fn eval_point(self, x: &[f64; 3], values: &mut Vec<f64>, grads: &mut Vec<[f64; 3]>) {
        use Shape::*;
        match self {
            SegmentUnitLinear | TriLinear | TetLinear => {
                let d = self.dim();
                let (lam, dlam) = barycentric(x, d);
                for k in 0..=d {
                    values.push(lam[k]);
                    grads.push(dlam[k]);
                }
            }
            SegmentUnitQuadratic | TriQuadratic | TetQuadratic => {
                let d = self.dim();
                let (lam, dlam) = barycentric(x, d);
                for k in 0..=d {
                    values.push(lam[k] * (2.0 * lam[k] - 1.0));
                    grads.push(scale(&dlam[k], 4.0 * lam[k] - 1.0));
                }
                let edges: &[(usize, usize)] = match d {
                    1 => &[(0, 1)],
                    2 => &TRI_EDGES,
                    _ => &TET_EDGES,
                };
                for &(a, b) in edges {
                    values.push(4.0 * lam[a] * lam[b]);
                    let mut g = [0.0; 3];
                    for i in 0..3 {
                        g[i] = 4.0 * (lam[a] * dlam[b][i] + lam[b] * dlam[a][i]);
                    }
                    grads.push(g);
                }
            }
            SegmentLinear => {
                let t = x[0];
                values.push(0.5 * (1.0 - t));
                grads.push([-0.5, 0.0, 0.0]);
                values.push(0.5 * (1.0 + t));
                grads.push([0.5, 0.0, 0.0]);
            }
            SegmentQuadratic => {
                let t = x[0];
                values.push(0.5 * t * (t - 1.0));
                grads.push([t - 0.5, 0.0, 0.0]);
                values.push(0.5 * t * (t + 1.0));
                grads.push([t + 0.5, 0.0, 0.0]);
                values.push(1.0 - t * t);
                grads.push([-2.0 * t, 0.0, 0.0]);
            }
            QuadLinear => {
                for s in QUAD_CORNERS {
                    let a = [1.0 + s[0] * x[0], 1.0 + s[1] * x[1]];
                    values.push(0.25 * a[0] * a[1]);
                    grads.push([0.25 * s[0] * a[1], 0.25 * s[1] * a[0], 0.0]);
                }
            }
            QuadSerendipity => {
                for s in QUAD_CORNERS {
                    let a = [1.0 + s[0] * x[0], 1.0 + s[1] * x[1]];
                    let sum = s[0] * x[0] + s[1] * x[1];
                    values.push(0.25 * a[0] * a[1] * (sum - 1.0));
                    grads.push([
                        0.25 * s[0] * a[1] * (sum - 1.0 + a[0]),
                        0.25 * s[1] * a[0] * (sum - 1.0 + a[1]),
                        0.0,
                    ]);
                }
                for s in QUAD_MIDS {
                    // exactly one coordinate of a mid-edge node is zero
                    let i = if s[0] == 0.0 { 0 } else { 1 };
                    let j = 1 - i;
                    let bubble = 1.0 - x[i] * x[i];
                    let aj = 1.0 + s[j] * x[j];
                    values.push(0.5 * bubble * aj);
                    let mut g = [0.0; 3];
                    g[i] = -x[i] * aj;
                    g[j] = 0.5 * bubble * s[j];
                    grads.push(g);
                }
            }
            HexLinear => {
                for s in HEX_CORNERS {
                    let a = [1.0 + s[0] * x[0], 1.0 + s[1] * x[1], 1.0 + s[2] * x[2]];
                    values.push(0.125 * a[0] * a[1] * a[2]);
                    grads.push([
                        0.125 * s[0] * a[1] * a[2],
                        0.125 * s[1] * a[0] * a[2],
                        0.125 * s[2] * a[0] * a[1],
                    ]);
                }
            }
            HexSerendipity => {
                for s in HEX_CORNERS {
                    let a = [1.0 + s[0] * x[0], 1.0 + s[1] * x[1], 1.0 + s[2] * x[2]];
                    let sum = s[0] * x[0] + s[1] * x[1] + s[2] * x[2];
                    values.push(0.125 * a[0] * a[1] * a[2] * (sum - 2.0));
                    grads.push([
                        0.125 * s[0] * a[1] * a[2] * (sum - 2.0 + a[0]),
                        0.125 * s[1] * a[0] * a[2] * (sum - 2.0 + a[1]),
                        0.125 * s[2] * a[0] * a[1] * (sum - 2.0 + a[2]),
                    ]);
                }
                for s in HEX_MIDS {
                    let i = s.iter().position(|&c| c == 0.0).expect("mid-edge node has a zero coordinate");
                    let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                    let bubble = 1.0 - x[i] * x[i];
                    let aj = 1.0 + s[j] * x[j];
                    let ak = 1.0 + s[k] * x[k];
                    values.push(0.25 * bubble * aj * ak);
                    let mut g = [0.0; 3];
                    g[i] = -0.5 * x[i] * aj * ak;
                    g[j] = 0.25 * bubble * s[j] * ak;
                    g[k] = 0.25 * bubble * aj * s[k];
                    grads.push(g);
                }
            }
        }
    }
}

/// Barycentric coordinates `(1 - sum x, x_1, ..., x_d)` and their gradients.
fn barycentric(x: &[f64; 3], d: usize) -> ([f64; 4], [[f64; 3]; 4]) {
    let mut lam = [0.0; 4];
    let mut dlam = [[0.0; 3]; 4];
    lam[0] = 1.0 - x[..d].iter().sum::<f64>();
    for k in 0..d {
        lam[k + 1] = x[k];
        dlam[0][k] = -1.0;
        dlam[k + 1][k] = 1.0;
    }
    (lam, dlam)
}

fn scale(v: &[f64; 3], s: f64) -> [f64; 3] {
    [v[0] * s, v[1] * s, v[2] * s]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn et(family: Family, dim: usize) -> ElementType {
        ElementType::new(family, dim).unwrap()
    }

    #[test]
    fn node_counts() {
        let expected = [(Family::P1, 3, 4), (Family::P2, 6, 10), (Family::Q1, 4, 8), (Family::Q2, 8, 20)];
        for (f, n2, n3) in expected {
            assert_eq!(et(f, 2).n_nodes(), n2);
            assert_eq!(et(f, 3).n_nodes(), n3);
            assert_eq!(et(f, 2).reference_nodes().len(), n2);
            assert_eq!(et(f, 3).reference_nodes().len(), n3);
        }
    }

    #[test]
    fn rejects_unsupported_dimension() {
        assert!(matches!(ElementType::new(Family::P1, 1), Err(FemError::InvalidElement(_))));
        let bogus = ElementType { family: Family::Q2, dim: 4 };
        assert!(quadrature_volume(bogus).is_err());
        assert!(local_basis_face(bogus, &[[0.0; 3]]).is_err());
    }

    #[test]
    fn p1_tet_rule() {
        let q = quadrature_volume(et(Family::P1, 3)).unwrap();
        assert_eq!(q.points, vec![[0.25, 0.25, 0.25]]);
        assert_eq!(q.weights, vec![1.0 / 6.0]);
    }

    #[test]
    fn p2_tet_rule_first_weight() {
        let q = quadrature_volume(et(Family::P2, 3)).unwrap();
        assert_eq!(q.n_points(), 11);
        assert_eq!(q.weights[0], -0.013155555555555);
        assert_eq!(q.points[0], [0.25, 0.25, 0.25]);
    }

    #[test]
    fn weights_sum_to_reference_measure() {
        for e in ElementType::all() {
            let q = quadrature_volume(e).unwrap();
            let s: f64 = q.weights.iter().sum();
            assert!((s - e.reference_measure()).abs() < 1e-12 * e.reference_measure(), "{e}: {s}");
        }
    }

    #[test]
    fn face_rules() {
        let q = quadrature_face(et(Family::Q1, 3)).unwrap();
        assert_eq!(q.n_points(), 4);
        let a = 1.0 / 3f64.sqrt();
        for p in &q.points {
            assert!((p[0].abs() - a).abs() < 1e-15 && (p[1].abs() - a).abs() < 1e-15);
        }
        assert!(q.weights.iter().all(|&w| w == 1.0));

        let q = quadrature_face(et(Family::P1, 3)).unwrap();
        assert_eq!(q.n_points(), 1);
        assert!((q.points[0][0] - 1.0 / 3.0).abs() < 1e-15 && (q.points[0][1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(q.weights[0], 0.5);
    }

    #[test]
    fn face_partition_of_unity() {
        for e in ElementType::all() {
            let q = quadrature_face(e).unwrap();
            let b = local_basis_face(e, &q.points).unwrap();
            assert_eq!(b.n_p, e.n_face_nodes());
            for qi in 0..b.n_q {
                let s: f64 = (0..b.n_p).map(|p| b.value(p, qi)).sum();
                assert!((s - 1.0).abs() < 1e-12, "{e}");
            }
        }
    }

    #[test]
    fn face_nodes_match_face_reference_nodes() {
        // The face basis must interpolate the volume basis restricted to the face:
        // every face node list has to be geometrically consistent with the face
        // element's reference nodes under some affine map. We check that the
        // corner nodes of each face are distinct vertices and that quadratic
        // mid-nodes sit halfway between the corresponding corners.
        for e in ElementType::all() {
            let nodes = e.reference_nodes();
            let face_ref = e.face_shape().nodes();
            for face in e.faces() {
                assert_eq!(face.len(), face_ref.len());
                // Affine map from face reference coordinates: x = x0 + sum_k t_k (x_k - x0)
                // for simplices; for tensor faces use bilinear interpolation of corners.
                for (local, &node) in face.iter().enumerate() {
                    let t = face_ref[local];
                    let mapped = map_face_point(e, &face, &nodes, &t);
                    for i in 0..3 {
                        assert!((mapped[i] - nodes[node][i]).abs() < 1e-14, "{e} face {face:?} node {node}");
                    }
                }
            }
        }
    }

    fn map_face_point(e: ElementType, face: &[usize], nodes: &[[f64; 3]], t: &[f64; 3]) -> [f64; 3] {
        let lin = ElementType { family: if e.is_simplex() { Family::P1 } else { Family::Q1 }, dim: e.dim };
        let b = lin.face_shape().evaluate(&[*t]);
        let mut x = [0.0; 3];
        for p in 0..b.n_p {
            for i in 0..3 {
                x[i] += b.value(p, 0) * nodes[face[p]][i];
            }
        }
        x
    }

    #[test]
    fn q2_hex_node_seven() {
        let b = local_basis_volume(et(Family::Q2, 3), &[[1.0, 1.0, 1.0]]).unwrap();
        for p in 0..20 {
            let expect = if p == 6 { 1.0 } else { 0.0 };
            assert!((b.value(p, 0) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn p1_tet_origin() {
        let b = local_basis_volume(et(Family::P1, 3), &[[0.0; 3]]).unwrap();
        assert_eq!(&b.values[..], &[1.0, 0.0, 0.0, 0.0]);
    }
}
