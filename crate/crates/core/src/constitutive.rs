//! Stress-strain operators and their consistent tangents.
//!
//! Voigt storage: stress `(s11, s22, s33, s12, s23, s31)`, strain with
//! engineering shears `(e11, e22, e33, 2e12, 2e23, 2e31)`. Tangent blocks map
//! strain-type increments to stress-type increments and are stored column-major.

use crate::error::{FemError, Result};

pub type Voigt = [f64; 6];
pub type Block = [f64; 36];

pub const IOTA: Voigt = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];

/// `IOTA IOTA^T`.
pub fn vol() -> Block {
    let mut m = [0.0; 36];
    for j in 0..3 {
        for i in 0..3 {
            m[j * 6 + i] = 1.0;
        }
    }
    m
}

/// `diag(1, 1, 1, 1/2, 1/2, 1/2) - VOL/3`: sends a strain-type vector to the
/// stress-type vector of its deviator.
pub fn dev() -> Block {
    let mut m = [0.0; 36];
    for j in 0..3 {
        for i in 0..3 {
            m[j * 6 + i] = if i == j { 2.0 / 3.0 } else { -1.0 / 3.0 };
        }
    }
    for i in 3..6 {
        m[i * 6 + i] = 0.5;
    }
    m
}

/// Elastic operator `C = K VOL + 2G DEV`.
pub fn elastic_block(bulk: f64, shear: f64) -> Block {
    let (v, d) = (vol(), dev());
    let mut c = [0.0; 36];
    for k in 0..36 {
        c[k] = bulk * v[k] + 2.0 * shear * d[k];
    }
    c
}

#[inline]
pub fn trace(e: &Voigt) -> f64 {
    e[0] + e[1] + e[2]
}

/// Stress-type deviator of a strain-type vector.
#[inline]
pub fn deviator(e: &Voigt) -> Voigt {
    let m = trace(e) / 3.0;
    [e[0] - m, e[1] - m, e[2] - m, 0.5 * e[3], 0.5 * e[4], 0.5 * e[5]]
}

/// Tensor norm of a stress-type vector.
#[inline]
pub fn stress_norm(s: &Voigt) -> f64 {
    (s[0] * s[0] + s[1] * s[1] + s[2] * s[2] + 2.0 * (s[3] * s[3] + s[4] * s[4] + s[5] * s[5])).sqrt()
}

/// Strain-type representation of a stress-type vector (shears doubled).
#[inline]
pub fn to_strain_type(s: &Voigt) -> Voigt {
    [s[0], s[1], s[2], 2.0 * s[3], 2.0 * s[4], 2.0 * s[5]]
}

#[inline]
pub fn block_apply(m: &Block, x: &Voigt) -> Voigt {
    let mut y = [0.0; 6];
    for j in 0..6 {
        for i in 0..6 {
            y[i] += m[j * 6 + i] * x[j];
        }
    }
    y
}

/// Bulk and shear modulus from Young's modulus and Poisson's ratio.
pub fn elastic_moduli(young: f64, nu: f64) -> Result<(f64, f64)> {
    if !(young > 0.0) || !young.is_finite() {
        return Err(FemError::InvalidMaterial(format!("Young's modulus must be positive, got {young}")));
    }
    if !(nu > -1.0 && nu < 0.5) {
        return Err(FemError::InvalidMaterial(format!("Poisson's ratio must lie in (-1, 1/2), got {nu}")));
    }
    Ok((young / (3.0 * (1.0 - 2.0 * nu)), young / (2.0 * (1.0 + nu))))
}

/// How the Drucker-Prager cone is fitted to the Mohr-Coulomb parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DpMode {
    PlaneStrain,
    ThreeD,
}

/// `(eta, c)` from the cohesion `c0` and the friction angle `phi`.
pub fn dp_parameters(c0: f64, phi: f64, mode: DpMode) -> Result<(f64, f64)> {
    if !(c0 > 0.0) {
        return Err(FemError::InvalidMaterial(format!("cohesion must be positive, got {c0}")));
    }
    if !(phi > 0.0 && phi < std::f64::consts::FRAC_PI_2) {
        return Err(FemError::InvalidMaterial(format!("friction angle must lie in (0, pi/2), got {phi}")));
    }
    Ok(match mode {
        DpMode::ThreeD => {
            let d = 3f64.sqrt() * (3.0 + phi.sin());
            (6.0 * phi.sin() / d, c0 * 6.0 * phi.cos() / d)
        }
        DpMode::PlaneStrain => {
            let t = phi.tan();
            let d = (9.0 + 12.0 * t * t).sqrt();
            (3.0 * t / d, c0 * 3.0 / d)
        }
    })
}

/// Plastic parameters per integration point.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Elastic,
    /// Von Mises with linear kinematic hardening modulus `a` and yield stress `y`.
    VonMises { a: Vec<f64>, y: Vec<f64> },
    /// Perfectly plastic Drucker-Prager cone.
    DruckerPrager { eta: Vec<f64>, c: Vec<f64> },
}

/// Material data at every integration point.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialField {
    pub shear: Vec<f64>,
    pub bulk: Vec<f64>,
    pub model: Model,
}

impl MaterialField {
    pub fn elastic(n: usize, bulk: f64, shear: f64) -> Self {
        MaterialField { shear: vec![shear; n], bulk: vec![bulk; n], model: Model::Elastic }
    }

    pub fn von_mises(n: usize, bulk: f64, shear: f64, a: f64, y: f64) -> Self {
        MaterialField {
            shear: vec![shear; n],
            bulk: vec![bulk; n],
            model: Model::VonMises { a: vec![a; n], y: vec![y; n] },
        }
    }

    pub fn drucker_prager(n: usize, bulk: f64, shear: f64, eta: f64, c: f64) -> Self {
        MaterialField {
            shear: vec![shear; n],
            bulk: vec![bulk; n],
            model: Model::DruckerPrager { eta: vec![eta; n], c: vec![c; n] },
        }
    }

    pub fn n_points(&self) -> usize {
        self.shear.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_points();
        let lens_ok = self.bulk.len() == n
            && match &self.model {
                Model::Elastic => true,
                Model::VonMises { a, y } => a.len() == n && y.len() == n,
                Model::DruckerPrager { eta, c } => eta.len() == n && c.len() == n,
            };
        if !lens_ok {
            return Err(FemError::DimensionMismatch("material arrays differ in length".into()));
        }
        let bad = |name: &str, v: &[f64], ok: fn(f64) -> bool| -> Result<()> {
            match v.iter().position(|&x| !ok(x)) {
                Some(q) => Err(FemError::InvalidMaterial(format!("{name} = {} at point {q}", v[q]))),
                None => Ok(()),
            }
        };
        let pos = |x: f64| x > 0.0 && x.is_finite();
        bad("G", &self.shear, pos)?;
        bad("K", &self.bulk, pos)?;
        match &self.model {
            Model::Elastic => Ok(()),
            Model::VonMises { a, y } => {
                bad("a", a, |x| x >= 0.0 && x.is_finite())?;
                bad("Y", y, pos)
            }
            Model::DruckerPrager { eta, c } => {
                bad("eta", eta, pos)?;
                bad("c", c, pos)
            }
        }
    }

    /// Elastic blocks `C` at every point.
    pub fn elastic_blocks(&self) -> Vec<Block> {
        self.bulk.iter().zip(&self.shear).map(|(&k, &g)| elastic_block(k, g)).collect()
    }
}

/// Fields carried at the integration points.
///
/// `plastic` marks points whose tangent differs from the elastic block;
/// for Drucker-Prager it is the union of `smooth` and `apex`. `criterion` holds
/// the deciding trial value (yield function for von Mises, the first decision
/// criterion for Drucker-Prager, `-inf` for pure elasticity).
#[derive(Clone, Debug, PartialEq)]
pub struct IntegrationState {
    pub strain: Vec<Voigt>,
    pub plastic_strain: Vec<Voigt>,
    pub hardening: Vec<Voigt>,
    pub stress: Vec<Voigt>,
    pub tangent: Vec<Block>,
    pub plastic: Vec<bool>,
    pub smooth: Vec<bool>,
    pub apex: Vec<bool>,
    pub criterion: Vec<f64>,
}

impl IntegrationState {
    /// Virgin state: zero strains, stresses and back-stress, elastic tangents.
    pub fn new(mat: &MaterialField) -> Self {
        let n = mat.n_points();
        IntegrationState {
            strain: vec![[0.0; 6]; n],
            plastic_strain: vec![[0.0; 6]; n],
            hardening: vec![[0.0; 6]; n],
            stress: vec![[0.0; 6]; n],
            tangent: mat.elastic_blocks(),
            plastic: vec![false; n],
            smooth: vec![false; n],
            apex: vec![false; n],
            criterion: vec![f64::NEG_INFINITY; n],
        }
    }

    pub fn n_points(&self) -> usize {
        self.strain.len()
    }

    pub fn n_plastic(&self) -> usize {
        self.plastic.iter().filter(|&&p| p).count()
    }

    /// Tensor norm of the back-stress at each point.
    pub fn hardening_norm(&self) -> Vec<f64> {
        self.hardening.iter().map(stress_norm).collect()
    }
}

fn check_len(what: &str, got: usize, n: usize) -> Result<()> {
    if got != n {
        return Err(FemError::DimensionMismatch(format!("{what} has {got} points, expected {n}")));
    }
    Ok(())
}

/// Evaluates the model of `mat` at strain `strain`, starting from the committed
/// state `prev`. `prev` is not modified.
pub fn evaluate(mat: &MaterialField, strain: &[Voigt], prev: &IntegrationState) -> Result<IntegrationState> {
    match &mat.model {
        Model::Elastic => constitutive_elastic(strain, mat),
        Model::VonMises { a, y } => {
            constitutive_vm(strain, &prev.plastic_strain, &prev.hardening, &mat.shear, &mat.bulk, a, y)
        }
        Model::DruckerPrager { eta, c } => {
            let mut st = constitutive_dp(strain, &prev.plastic_strain, &mat.shear, &mat.bulk, eta, c)?;
            st.hardening.clone_from(&prev.hardening);
            Ok(st)
        }
    }
}

/// Linear elasticity: `S = C E`, tangent `C`.
pub fn constitutive_elastic(strain: &[Voigt], mat: &MaterialField) -> Result<IntegrationState> {
    let n = mat.n_points();
    check_len("strain", strain.len(), n)?;
    let mut st = IntegrationState::new(mat);
    st.strain = strain.to_vec();
    for q in 0..n {
        st.stress[q] = block_apply(&st.tangent[q], &strain[q]);
    }
    Ok(st)
}

/// Von Mises plasticity with linear kinematic hardening (radial return).
pub fn constitutive_vm(
    strain: &[Voigt],
    ep_prev: &[Voigt],
    hard_prev: &[Voigt],
    shear: &[f64],
    bulk: &[f64],
    a: &[f64],
    y: &[f64],
) -> Result<IntegrationState> {
    let n = strain.len();
    for (what, len) in [
        ("plastic strain", ep_prev.len()),
        ("hardening", hard_prev.len()),
        ("shear", shear.len()),
        ("bulk", bulk.len()),
        ("a", a.len()),
        ("Y", y.len()),
    ] {
        check_len(what, len, n)?;
    }
    let dev_m = dev();

    // Elastic predictor at every point.
    let mut stress = Vec::with_capacity(n);
    let mut tangent = Vec::with_capacity(n);
    let mut s_tr = Vec::with_capacity(n);
    let mut norm_tr = Vec::with_capacity(n);
    let mut criterion = Vec::with_capacity(n);
    for q in 0..n {
        let e_tr: Voigt = std::array::from_fn(|i| strain[q][i] - ep_prev[q][i]);
        let d = deviator(&e_tr);
        let p = bulk[q] * trace(&e_tr);
        let g2 = 2.0 * shear[q];
        stress.push(std::array::from_fn(|i| g2 * d[i] + p * IOTA[i]));
        tangent.push(elastic_block(bulk[q], shear[q]));
        let s: Voigt = std::array::from_fn(|i| g2 * d[i] - hard_prev[q][i]);
        let ns = stress_norm(&s);
        criterion.push(ns - y[q]);
        s_tr.push(s);
        norm_tr.push(ns);
    }
    let plastic: Vec<bool> = criterion.iter().map(|&c| c > 0.0).collect();

    // Plastic corrector on the yielding subset.
    let mut plastic_strain = ep_prev.to_vec();
    let mut hardening = hard_prev.to_vec();
    for q in (0..n).filter(|&q| plastic[q]) {
        let (g, ns, crit) = (shear[q], norm_tr[q], criterion[q]);
        let denom = 2.0 * g + a[q];
        let nrm: Voigt = std::array::from_fn(|i| s_tr[q][i] / ns);
        let nrm_e = to_strain_type(&nrm);
        let lambda = crit / denom;
        let c1 = 4.0 * g * g / denom;
        let c2 = c1 * y[q] / ns;
        for i in 0..6 {
            stress[q][i] -= 2.0 * g * lambda * nrm[i];
            hardening[q][i] += a[q] * lambda * nrm[i];
            plastic_strain[q][i] += lambda * nrm_e[i];
        }
        let ds = &mut tangent[q];
        for j in 0..6 {
            for i in 0..6 {
                let k = j * 6 + i;
                ds[k] += -c1 * dev_m[k] + c2 * (dev_m[k] - nrm[i] * nrm[j]);
            }
        }
    }

    Ok(IntegrationState {
        strain: strain.to_vec(),
        plastic_strain,
        hardening,
        stress,
        tangent,
        smooth: plastic.clone(),
        plastic,
        apex: vec![false; n],
        criterion,
    })
}

/// Perfectly plastic Drucker-Prager with return to the smooth cone surface or
/// to its apex. The pressure measure is `p = K tr(E - Ep)` and the yield
/// function reads `rho / sqrt(2) + eta p - c` with `rho = 2G |dev(E - Ep)|`.
pub fn constitutive_dp(
    strain: &[Voigt],
    ep_prev: &[Voigt],
    shear: &[f64],
    bulk: &[f64],
    eta: &[f64],
    c: &[f64],
) -> Result<IntegrationState> {
    let n = strain.len();
    for (what, len) in [
        ("plastic strain", ep_prev.len()),
        ("shear", shear.len()),
        ("bulk", bulk.len()),
        ("eta", eta.len()),
        ("c", c.len()),
    ] {
        check_len(what, len, n)?;
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    let dev_m = dev();

    let mut stress = Vec::with_capacity(n);
    let mut tangent = Vec::with_capacity(n);
    let mut dev_e = Vec::with_capacity(n);
    let mut norm_e = Vec::with_capacity(n);
    let mut crit1 = Vec::with_capacity(n);
    let mut crit2 = Vec::with_capacity(n);
    for q in 0..n {
        let e_tr: Voigt = std::array::from_fn(|i| strain[q][i] - ep_prev[q][i]);
        let d = deviator(&e_tr);
        let ne = e_tr.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt();
        let (g, k) = (shear[q], bulk[q]);
        let rho = 2.0 * g * ne;
        let p = k * trace(&e_tr);
        stress.push(std::array::from_fn(|i| 2.0 * g * d[i] + p * IOTA[i]));
        tangent.push(elastic_block(k, g));
        crit1.push(rho / sqrt2 + eta[q] * p - c[q]);
        crit2.push(eta[q] * p - k * eta[q] * eta[q] * rho / (g * sqrt2) - c[q]);
        dev_e.push(d);
        norm_e.push(ne);
    }
    let smooth: Vec<bool> = (0..n).map(|q| crit1[q] > 0.0 && crit2[q] <= 0.0).collect();
    let apex: Vec<bool> = (0..n).map(|q| crit1[q] > 0.0 && crit2[q] > 0.0).collect();

    let mut plastic_strain = ep_prev.to_vec();
    for q in (0..n).filter(|&q| smooth[q]) {
        if !(norm_e[q] > 0.0) {
            return Err(FemError::InternalConsistency(format!(
                "smooth return with vanishing deviatoric trial strain at point {q}"
            )));
        }
        let (g, k, et) = (shear[q], bulk[q], eta[q]);
        let denom = g + k * et * et;
        let lambda = crit1[q] / denom;
        let rho = 2.0 * g * norm_e[q];
        let nn: Voigt = std::array::from_fn(|i| dev_e[q][i] / norm_e[q]);
        let m: Voigt = std::array::from_fn(|i| sqrt2 * g * nn[i] + k * et * IOTA[i]);
        let nn_e = to_strain_type(&nn);
        for i in 0..6 {
            stress[q][i] -= lambda * m[i];
            plastic_strain[q][i] += lambda * (nn_e[i] / sqrt2 + et / 3.0 * IOTA[i]);
        }
        let c_dev = 2.0 * sqrt2 * g * g * lambda / rho;
        let ds = &mut tangent[q];
        for j in 0..6 {
            for i in 0..6 {
                let kk = j * 6 + i;
                ds[kk] -= c_dev * (dev_m[kk] - nn[i] * nn[j]) + m[i] * m[j] / denom;
            }
        }
    }
    for q in (0..n).filter(|&q| apex[q]) {
        let s_apex = c[q] / eta[q];
        stress[q] = std::array::from_fn(|i| s_apex * IOTA[i]);
        tangent[q] = [0.0; 36];
        let shift = c[q] / (3.0 * bulk[q] * eta[q]);
        plastic_strain[q] = std::array::from_fn(|i| strain[q][i] - shift * IOTA[i]);
    }

    Ok(IntegrationState {
        strain: strain.to_vec(),
        plastic_strain,
        hardening: vec![[0.0; 6]; n],
        stress,
        tangent,
        plastic: (0..n).map(|q| smooth[q] || apex[q]).collect(),
        smooth,
        apex,
        criterion: crit1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_identities() {
        let (d, v) = (dev(), vol());
        assert!(block_apply(&d, &IOTA).iter().all(|x| x.abs() < 1e-15));
        for i in 0..6 {
            for j in 0..6 {
                let vv: f64 = (0..6).map(|k| v[k * 6 + i] * v[j * 6 + k]).sum();
                assert_eq!(vv, 3.0 * v[j * 6 + i]);
            }
        }
        let e = [0.1, -0.2, 0.3, 0.4, -0.5, 0.6];
        let (x, y) = (block_apply(&d, &e), deviator(&e));
        for i in 0..6 {
            assert_relative_eq!(x[i], y[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn moduli_examples() {
        let (k, g) = elastic_moduli(206900.0, 0.29).unwrap();
        assert_relative_eq!(k, 206900.0 / 1.26, max_relative = 1e-14);
        assert_relative_eq!(g, 206900.0 / 2.58, max_relative = 1e-14);
        assert!((k - 164206.349).abs() < 1e-3 && (g - 80193.798).abs() < 1e-3);
        assert_eq!(elastic_moduli(1.0, 0.0).unwrap(), (1.0 / 3.0, 0.5));
        let (k, g) = elastic_moduli(1e7, 0.48).unwrap();
        assert!((k / 8.3333e7 - 1.0).abs() < 1e-4 && (g / 3.3784e6 - 1.0).abs() < 1e-4);
        assert!(elastic_moduli(1.0, 0.5).is_err());
        assert!(elastic_moduli(-1.0, 0.2).is_err());
    }

    #[test]
    fn dp_parameter_examples() {
        let (eta, c) = dp_parameters(450.0, std::f64::consts::PI / 9.0, DpMode::ThreeD).unwrap();
        assert!((eta - 0.354513880854).abs() < 1e-11, "{eta}");
        assert!((c - 438.308497138860).abs() < 1e-9, "{c}");
        let (eta, c) = dp_parameters(2.0, 1e-9, DpMode::ThreeD).unwrap();
        assert!(eta < 1e-8 && (c - 2.0 * 6.0 / (3.0 * 3f64.sqrt())).abs() < 1e-8);
        let (eta, c) = dp_parameters(2.0, 1e-9, DpMode::PlaneStrain).unwrap();
        assert!(eta < 1e-8 && (c - 2.0).abs() < 1e-8);
        assert!(dp_parameters(450.0, 0.0, DpMode::ThreeD).is_err());
    }

    #[test]
    fn elastic_examples() {
        let mat = MaterialField::elastic(2, 3.0, 1.5);
        let d = 0.01;
        let st = constitutive_elastic(&[[0.0; 6], [d, d, d, 0.0, 0.0, 0.0]], &mat).unwrap();
        assert_eq!(st.stress[0], [0.0; 6]);
        for i in 0..3 {
            assert_relative_eq!(st.stress[1][i], 3.0 * 3.0 * d, max_relative = 1e-14);
            assert_eq!(st.stress[1][i + 3], 0.0);
        }
    }

    #[test]
    fn vm_zero_strain_is_elastic() {
        let mat = MaterialField::von_mises(1, 2.0, 1.0, 0.5, 1.0);
        let st = evaluate(&mat, &[[0.0; 6]], &IntegrationState::new(&mat)).unwrap();
        assert!(!st.plastic[0]);
        assert_eq!(st.stress[0], [0.0; 6]);
        assert_eq!(st.tangent[0], elastic_block(2.0, 1.0));
    }

    #[test]
    fn vm_perfect_return_lands_on_surface() {
        // Deviatoric uniaxial strain e = (2t, -t, -t): |2G dev e| = 2G t sqrt(6).
        let (k, g, y) = (2.0, 1.0, 0.5);
        let t = 0.3;
        let mat = MaterialField::von_mises(1, k, g, 0.0, y);
        let e = [2.0 * t, -t, -t, 0.0, 0.0, 0.0];
        let st = evaluate(&mat, &[e], &IntegrationState::new(&mat)).unwrap();
        assert!(st.plastic[0]);
        let expected = [2.0, -1.0, -1.0].map(|v| v * y / 6f64.sqrt());
        for i in 0..3 {
            assert_relative_eq!(st.stress[0][i], expected[i], epsilon = 1e-14);
        }
        assert_relative_eq!(stress_norm(&deviator_of_stress(&st.stress[0])), y, max_relative = 1e-12);
    }

    fn deviator_of_stress(s: &Voigt) -> Voigt {
        let m = trace(s) / 3.0;
        [s[0] - m, s[1] - m, s[2] - m, s[3], s[4], s[5]]
    }

    #[test]
    fn vm_with_huge_yield_equals_elastic() {
        let e = [[1e-3, -2e-3, 5e-4, 1e-3, 0.0, -3e-4]];
        let vm = MaterialField::von_mises(1, 5.0, 2.0, 1.0, 1e9);
        let el = MaterialField::elastic(1, 5.0, 2.0);
        let a = evaluate(&vm, &e, &IntegrationState::new(&vm)).unwrap();
        let b = evaluate(&el, &e, &IntegrationState::new(&el)).unwrap();
        assert!(!a.plastic[0]);
        for i in 0..6 {
            assert_relative_eq!(a.stress[0][i], b.stress[0][i], epsilon = 1e-15);
        }
        for i in 0..36 {
            assert_relative_eq!(a.tangent[0][i], b.tangent[0][i], epsilon = 1e-13);
        }
    }

    #[test]
    fn dp_zero_and_apex() {
        let (k, g, eta, c) = (3.0, 1.0, 0.3, 0.2);
        let mat = MaterialField::drucker_prager(2, k, g, eta, c);
        let d = 10.0;
        let st = evaluate(&mat, &[[0.0; 6], [d / 3.0, d / 3.0, d / 3.0, 0.0, 0.0, 0.0]], &IntegrationState::new(&mat))
            .unwrap();
        assert!(!st.plastic[0] && st.stress[0] == [0.0; 6]);
        assert!(st.apex[1] && !st.smooth[1]);
        assert_eq!(st.tangent[1], [0.0; 36]);
        for i in 0..3 {
            assert_relative_eq!(st.stress[1][i], c / eta, max_relative = 1e-15);
        }
    }

    #[test]
    fn material_validation() {
        assert!(MaterialField::von_mises(2, 1.0, 1.0, 0.0, 1.0).validate().is_ok());
        assert!(MaterialField::von_mises(2, 1.0, 1.0, -1.0, 1.0).validate().is_err());
        assert!(MaterialField::drucker_prager(2, 1.0, 1.0, 0.0, 1.0).validate().is_err());
        assert!(MaterialField::elastic(2, 1.0, 0.0).validate().is_err());
    }
}
