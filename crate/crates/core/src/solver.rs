//! Newton iteration for one load step and the three benchmark drivers.

use std::time::Instant;

use crate::assembly::{external_forces, AssemblyCache};
use crate::constitutive::{dp_parameters, elastic_moduli, evaluate, DpMode, IntegrationState, MaterialField};
use crate::error::{FemError, Result};
use crate::linalg::{energy_norm, LinearSolverKind, RestrictedSolver};
use crate::mesh::Mesh;
use crate::reference_elements::quadrature_volume;

/// What a driver does when a load step fails to converge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailurePolicy {
    Error,
    HalveStep,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonSettings {
    pub eps_newton: f64,
    pub max_iters: usize,
    pub on_failure: FailurePolicy,
    pub linear_solver: LinearSolverKind,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            eps_newton: 1e-10,
            max_iters: 25,
            on_failure: FailurePolicy::Error,
            linear_solver: LinearSolverKind::Direct,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_newton > 0.0) {
            return Err(FemError::Config(format!("eps_newton must be positive, got {}", self.eps_newton)));
        }
        if self.max_iters == 0 {
            return Err(FemError::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Time spent on one tangent assembly and the plastic-point count it handled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentSample {
    pub n_plastic: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct NewtonResult {
    pub u: Vec<f64>,
    /// State from a final constitutive evaluation at `u`.
    pub state: IntegrationState,
    pub iterations: usize,
    pub criterion: f64,
    pub samples: Vec<TangentSample>,
}

/// One accepted load step.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeStepRecord {
    pub step: usize,
    /// Load scale (von Mises), prescribed footing displacement (Drucker-Prager)
    /// or 1 for the elastic solve.
    pub load: f64,
    pub newton_iters: usize,
    pub n_plastic: usize,
    pub tangent_seconds: f64,
    /// Work of the peak traction (von Mises), normalised footing pressure
    /// `p / c0` (Drucker-Prager) or the maximal displacement (elastic).
    pub derived: f64,
}

/// Mesh, material and assembled operators of one run.
pub struct Problem {
    pub mesh: Mesh,
    pub material: MaterialField,
    pub cache: AssemblyCache,
    linear: RestrictedSolver,
}

/// Number of integration points of a mesh.
pub fn n_integration_points(mesh: &Mesh) -> Result<usize> {
    Ok(mesh.n_elems() * quadrature_volume(mesh.elem_type)?.n_points())
}

impl Problem {
    pub fn new(mesh: Mesh, material: MaterialField, linear_solver: LinearSolverKind) -> Result<Self> {
        mesh.validate()?;
        material.validate()?;
        let n = n_integration_points(&mesh)?;
        if material.n_points() != n {
            return Err(FemError::DimensionMismatch(format!(
                "material has {} points, mesh has {n}",
                material.n_points()
            )));
        }
        let cache = AssemblyCache::new(&mesh, material.elastic_blocks())?;
        let linear = RestrictedSolver::new(&mesh.free, linear_solver);
        Ok(Problem { mesh, material, cache, linear })
    }

    pub fn set_linear_solver(&mut self, kind: LinearSolverKind) {
        self.linear = RestrictedSolver::new(&self.mesh.free, kind);
    }

    /// Solves one load step. Free dofs start from `u_start`, constrained dofs
    /// take `dirichlet_scale * mesh.dirichlet_values`; `prev` is left untouched.
    pub fn newton_solve(
        &mut self,
        prev: &IntegrationState,
        u_start: &[f64],
        dirichlet_scale: f64,
        f_ext: &[f64],
        settings: &NewtonSettings,
    ) -> Result<NewtonResult> {
        settings.validate()?;
        let n = self.mesh.n_dofs();
        if u_start.len() != n || f_ext.len() != n {
            return Err(FemError::DimensionMismatch(format!(
                "{} start values and {} loads for {n} dofs",
                u_start.len(),
                f_ext.len()
            )));
        }
        let free = &self.mesh.free;
        let mut u: Vec<f64> = (0..n)
            .map(|i| if free[i] { u_start[i] } else { dirichlet_scale * self.mesh.dirichlet_values[i] })
            .collect();
        let mut norm_u = energy_norm(&self.cache.k_elast, &u);
        // Floor for the denominator: a step that unloads to u = 0 would
        // otherwise compare round-off against round-off.
        let norm_start = norm_u;
        let mut samples = Vec::new();
        let mut criterion = f64::INFINITY;
        for it in 1..=settings.max_iters {
            let strain = self.cache.strain(&u);
            let state = evaluate(&self.material, &strain, prev)?;
            let f_int = self.cache.internal_forces(&state.stress)?;
            let t0 = Instant::now();
            let k = self.cache.assemble_tangent_stiffness(&state.tangent, &state.plastic)?;
            samples.push(TangentSample { n_plastic: state.n_plastic(), seconds: t0.elapsed().as_secs_f64() });
            let rhs: Vec<f64> = (0..n).map(|i| if free[i] { f_ext[i] - f_int[i] } else { 0.0 }).collect();
            let du = self.linear.solve(&k, &rhs)?;
            for (ui, d) in u.iter_mut().zip(&du) {
                *ui += d;
            }
            let norm_new = energy_norm(&self.cache.k_elast, &u);
            let norm_du = energy_norm(&self.cache.k_elast, &du);
            let denom = (norm_u + norm_new).max(norm_start);
            criterion = if denom == 0.0 { 0.0 } else { norm_du / denom };
            norm_u = norm_new;
            if !criterion.is_finite() {
                break;
            }
            if criterion <= settings.eps_newton {
                let state = evaluate(&self.material, &self.cache.strain(&u), prev)?;
                return Ok(NewtonResult { u, state, iterations: it, criterion, samples });
            }
        }
        Err(FemError::NonConvergence { iterations: settings.max_iters, criterion })
    }

    /// `max |f - F(u)|` over the free dofs for the state `state`.
    pub fn residual_inf(&self, state: &IntegrationState, f_ext: &[f64]) -> Result<f64> {
        let f_int = self.cache.internal_forces(&state.stress)?;
        Ok((0..self.mesh.n_dofs())
            .filter(|&i| self.mesh.free[i])
            .map(|i| (f_ext[i] - f_int[i]).abs())
            .fold(0.0, f64::max))
    }

    fn dp_mode(&self) -> DpMode {
        if self.mesh.dim() == 2 {
            DpMode::PlaneStrain
        } else {
            DpMode::ThreeD
        }
    }
}

/// Snapshot of the back-stress norm after a given step.
#[derive(Clone, Debug, PartialEq)]
pub struct HardeningSnapshot {
    pub step: usize,
    pub time: f64,
    pub hardening_norm: Vec<f64>,
}

/// Output of a benchmark driver.
pub struct RunResult {
    pub problem: Problem,
    pub u: Vec<f64>,
    pub state: IntegrationState,
    pub records: Vec<TimeStepRecord>,
    pub samples: Vec<TangentSample>,
    pub snapshots: Vec<HardeningSnapshot>,
    /// Last converged normalised footing pressure.
    pub limit_pressure: Option<f64>,
    /// Why a footing run stopped before reaching `u_max`, if it did.
    pub stop_reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElasticConfig {
    pub young: f64,
    pub nu: f64,
    /// Normal traction density on the top edge.
    pub traction: f64,
    /// Volume force density in `x2`.
    pub volume_force: f64,
    /// Multiplier of the mesh's Dirichlet values (the bottom shift is 1/2).
    pub dirichlet_scale: f64,
    pub settings: NewtonSettings,
}

impl Default for ElasticConfig {
    fn default() -> Self {
        ElasticConfig {
            young: 206900.0,
            nu: 0.29,
            traction: 200.0,
            volume_force: 1.0,
            dirichlet_scale: 1.0,
            settings: NewtonSettings::default(),
        }
    }
}

fn max_displacement(u: &[f64], dim: usize) -> f64 {
    u.chunks_exact(dim).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

/// Linear elastic solve on the L-shaped body.
pub fn run_elastic(mesh: Mesh, cfg: &ElasticConfig) -> Result<RunResult> {
    let (k, g) = elastic_moduli(cfg.young, cfg.nu)?;
    let n = n_integration_points(&mesh)?;
    let mut problem = Problem::new(mesh, MaterialField::elastic(n, k, g), cfg.settings.linear_solver)?;
    let (fv, ft) = (cfg.volume_force, cfg.traction);
    let f = external_forces(
        &problem.mesh,
        &problem.cache,
        Some(&|_: &[f64; 3]| [0.0, fv, 0.0]),
        Some(&|_: &[f64; 3]| [0.0, ft, 0.0]),
    )?;
    let prev = IntegrationState::new(&problem.material);
    let zero = vec![0.0; problem.mesh.n_dofs()];
    let res = problem.newton_solve(&prev, &zero, cfg.dirichlet_scale, &f, &cfg.settings)?;
    let record = TimeStepRecord {
        step: 1,
        load: 1.0,
        newton_iters: res.iterations,
        n_plastic: 0,
        tangent_seconds: res.samples.iter().map(|s| s.seconds).sum(),
        derived: max_displacement(&res.u, problem.mesh.dim()),
    };
    Ok(RunResult {
        u: res.u,
        state: res.state,
        records: vec![record],
        samples: res.samples,
        snapshots: vec![],
        limit_pressure: None,
        stop_reason: None,
        problem,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct VmConfig {
    pub young: f64,
    pub nu: f64,
    pub a: f64,
    pub y: f64,
    pub traction_max: f64,
    pub n_steps: usize,
    /// Deepest recursive step halving when `on_failure` is `HalveStep`.
    pub max_halvings: usize,
    pub settings: NewtonSettings,
}

impl Default for VmConfig {
    fn default() -> Self {
        VmConfig {
            young: 206900.0,
            nu: 0.29,
            a: 1e4,
            y: 450.0 * (2.0f64 / 3.0).sqrt(),
            traction_max: 200.0,
            n_steps: 40,
            max_halvings: 6,
            settings: NewtonSettings::default(),
        }
    }
}

/// Traction scale of the cyclic test: up to 1 at `t = 1`, down to -1 at
/// `t = 3`, back to 0 at `t = 4`.
pub fn load_scale(t: f64) -> f64 {
    if t <= 1.0 {
        t
    } else if t <= 3.0 {
        2.0 - t
    } else {
        t - 4.0
    }
}

/// Cyclic traction on the L-shaped body with von Mises kinematic hardening.
pub fn run_vm_cyclic(mesh: Mesh, cfg: &VmConfig) -> Result<RunResult> {
    if cfg.n_steps == 0 {
        return Err(FemError::Config("n_steps must be positive".into()));
    }
    let (k, g) = elastic_moduli(cfg.young, cfg.nu)?;
    let n = n_integration_points(&mesh)?;
    let mut problem =
        Problem::new(mesh, MaterialField::von_mises(n, k, g, cfg.a, cfg.y), cfg.settings.linear_solver)?;
    let ft = cfg.traction_max;
    let f_max = external_forces(&problem.mesh, &problem.cache, None, Some(&|_: &[f64; 3]| [0.0, ft, 0.0]))?;

    let mut state = IntegrationState::new(&problem.material);
    let mut u = vec![0.0; problem.mesh.n_dofs()];
    let mut records = Vec::with_capacity(cfg.n_steps);
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let snapshot_steps: Vec<usize> =
        (1..=4).map(|j| ((j * cfg.n_steps) as f64 / 4.0).round().max(1.0) as usize).collect();
    let dt = 4.0 / cfg.n_steps as f64;
    for step in 1..=cfg.n_steps {
        let (t0, t1) = ((step - 1) as f64 * dt, step as f64 * dt);
        let mut iters = 0;
        let mut step_samples = Vec::new();
        vm_advance(&mut problem, &f_max, cfg, &mut state, &mut u, (t0, t1), 0, &mut iters, &mut step_samples)?;
        let zeta = load_scale(t1);
        let work: f64 = f_max.iter().zip(&u).map(|(a, b)| a * b).sum();
        records.push(TimeStepRecord {
            step,
            load: zeta,
            newton_iters: iters,
            n_plastic: state.n_plastic(),
            tangent_seconds: step_samples.iter().map(|s| s.seconds).sum(),
            derived: work,
        });
        samples.extend(step_samples);
        if snapshot_steps.contains(&step) {
            snapshots.push(HardeningSnapshot { step, time: t1, hardening_norm: state.hardening_norm() });
        }
    }
    Ok(RunResult { problem, u, state, records, samples, snapshots, limit_pressure: None, stop_reason: None })
}

#[allow(clippy::too_many_arguments)]
fn vm_advance(
    problem: &mut Problem,
    f_max: &[f64],
    cfg: &VmConfig,
    state: &mut IntegrationState,
    u: &mut Vec<f64>,
    (t0, t1): (f64, f64),
    depth: usize,
    iters: &mut usize,
    samples: &mut Vec<TangentSample>,
) -> Result<()> {
    let zeta = load_scale(t1);
    let f: Vec<f64> = f_max.iter().map(|v| zeta * v).collect();
    match problem.newton_solve(state, u, 0.0, &f, &cfg.settings) {
        Ok(res) => {
            *iters += res.iterations;
            samples.extend(res.samples);
            *u = res.u;
            *state = res.state;
            Ok(())
        }
        Err(e @ (FemError::NonConvergence { .. } | FemError::SolverFailure { .. }))
            if cfg.settings.on_failure == FailurePolicy::HalveStep && depth < cfg.max_halvings =>
        {
            let _ = e;
            let tm = 0.5 * (t0 + t1);
            vm_advance(problem, f_max, cfg, state, u, (t0, tm), depth + 1, iters, samples)?;
            vm_advance(problem, f_max, cfg, state, u, (tm, t1), depth + 1, iters, samples)
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpConfig {
    pub young: f64,
    pub nu: f64,
    pub c0: f64,
    pub phi: f64,
    pub du0: f64,
    pub u_max: f64,
    /// Relative pressure increment below which the displacement increment doubles.
    pub theta: f64,
    /// Successive halvings of a failing increment before the run stops.
    pub max_halvings: usize,
    /// Hard cap on accepted steps.
    pub max_steps: usize,
    pub settings: NewtonSettings,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            young: 1e7,
            nu: 0.48,
            c0: 450.0,
            phi: std::f64::consts::PI / 9.0,
            du0: 1e-3,
            u_max: 1.0,
            theta: 1e-3,
            max_halvings: 6,
            max_steps: 2000,
            settings: NewtonSettings { on_failure: FailurePolicy::HalveStep, ..NewtonSettings::default() },
        }
    }
}

/// Average pressure under the footing: minus the sum of vertical internal
/// forces at the footing nodes over the footing area (width 1, unit thickness
/// in 3D).
pub fn footing_pressure(problem: &Problem, state: &IntegrationState) -> Result<f64> {
    let f_int = problem.cache.internal_forces(&state.stress)?;
    let dim = problem.mesh.dim();
    Ok(-problem.mesh.footing_nodes.iter().map(|&n| f_int[dim * n + 1]).sum::<f64>())
}

/// Displacement-controlled strip footing on a Drucker-Prager soil.
pub fn run_dp_footing(mesh: Mesh, cfg: &DpConfig) -> Result<RunResult> {
    if !(cfg.du0 > 0.0) || !(cfg.u_max > 0.0) || !(cfg.theta >= 0.0) {
        return Err(FemError::Config("du0 and u_max must be positive, theta nonnegative".into()));
    }
    if mesh.footing_nodes.is_empty() {
        return Err(FemError::Config("mesh has no footing nodes".into()));
    }
    let (k, g) = elastic_moduli(cfg.young, cfg.nu)?;
    let n = n_integration_points(&mesh)?;
    let mode = if mesh.dim() == 2 { DpMode::PlaneStrain } else { DpMode::ThreeD };
    let (eta, c) = dp_parameters(cfg.c0, cfg.phi, mode)?;
    let mut problem =
        Problem::new(mesh, MaterialField::drucker_prager(n, k, g, eta, c), cfg.settings.linear_solver)?;
    debug_assert_eq!(problem.dp_mode(), mode);

    let zero_load = vec![0.0; problem.mesh.n_dofs()];
    let mut state = IntegrationState::new(&problem.material);
    let mut u = vec![0.0; problem.mesh.n_dofs()];
    let mut last: Option<(f64, Vec<f64>)> = None;
    let mut records = Vec::new();
    let mut samples = Vec::new();
    let mut u_d = 0.0;
    let mut du = cfg.du0;
    let mut p_prev = 0.0;
    let mut halvings = 0;
    let mut stop_reason = None;
    let tol = 1e-12 * cfg.u_max;
    while u_d < cfg.u_max - tol && records.len() < cfg.max_steps {
        let target = (u_d + du).min(cfg.u_max);
        // Start from the last increment extrapolated to the new footing
        // displacement; past the limit load it is close to a mechanism.
        let start: Vec<f64> = match &last {
            Some((u_d_old, u_old)) => {
                let s = (target - u_d) / (u_d - u_d_old);
                u.iter().zip(u_old).map(|(a, b)| a + s * (a - b)).collect()
            }
            None => u.clone(),
        };
        match problem.newton_solve(&state, &start, target, &zero_load, &cfg.settings) {
            Ok(res) => {
                halvings = 0;
                last = Some((u_d, std::mem::replace(&mut u, res.u)));
                u_d = target;
                state = res.state;
                let p = footing_pressure(&problem, &state)?;
                let step_seconds = res.samples.iter().map(|s| s.seconds).sum();
                records.push(TimeStepRecord {
                    step: records.len() + 1,
                    load: u_d,
                    newton_iters: res.iterations,
                    n_plastic: state.n_plastic(),
                    tangent_seconds: step_seconds,
                    derived: p / cfg.c0,
                });
                samples.extend(res.samples);
                if records.len() > 1 && (p - p_prev).abs() / p.abs().max(f64::MIN_POSITIVE) < cfg.theta {
                    du *= 2.0;
                }
                p_prev = p;
            }
            Err(e @ (FemError::NonConvergence { .. } | FemError::SolverFailure { .. })) => {
                if cfg.settings.on_failure == FailurePolicy::HalveStep && halvings < cfg.max_halvings {
                    halvings += 1;
                    du *= 0.5;
                } else if records.is_empty() {
                    return Err(e);
                } else {
                    stop_reason = Some(e.to_string());
                    break;
                }
            }
            Err(e) => return Err(e),
        }
    }
    let limit_pressure = records.last().map(|r| r.derived);
    Ok(RunResult { problem, u, state, records, samples, snapshots: vec![], limit_pressure, stop_reason })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh_elastic_body, build_mesh_footing};
    use crate::reference_elements::{ElementType, Family};

    #[test]
    fn load_scale_profile() {
        let pts = [(0.0, 0.0), (0.5, 0.5), (1.0, 1.0), (2.0, 0.0), (3.0, -1.0), (3.5, -0.5), (4.0, 0.0)];
        for (t, z) in pts {
            assert!((load_scale(t) - z).abs() < 1e-15, "{t}");
        }
    }

    #[test]
    fn zero_load_converges_immediately() {
        let mut mesh = build_mesh_elastic_body(0, ElementType::new(Family::Q1, 2).unwrap()).unwrap();
        mesh.dirichlet_values.iter_mut().for_each(|v| *v = 0.0);
        let n = n_integration_points(&mesh).unwrap();
        let mut p = Problem::new(mesh, MaterialField::elastic(n, 2.0, 1.0), LinearSolverKind::Direct).unwrap();
        let z = vec![0.0; p.mesh.n_dofs()];
        let prev = IntegrationState::new(&p.material);
        let r = p.newton_solve(&prev, &z, 1.0, &z, &NewtonSettings::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn elastic_run_stops_after_one_effective_solve() {
        for et in [ElementType::new(Family::P1, 2).unwrap(), ElementType::new(Family::Q2, 2).unwrap()] {
            let res = run_elastic(build_mesh_elastic_body(1, et).unwrap(), &ElasticConfig::default()).unwrap();
            assert_eq!(res.records[0].newton_iters, 2);
            assert!(res.records[0].derived > 0.0 && res.records[0].derived.is_finite());
        }
    }

    #[test]
    fn newton_rejects_bad_settings() {
        let s = NewtonSettings { eps_newton: 0.0, ..Default::default() };
        assert!(s.validate().is_err());
        let s = NewtonSettings { max_iters: 0, ..Default::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn footing_without_footing_nodes_is_rejected() {
        let mut mesh = build_mesh_footing(0, ElementType::new(Family::P1, 2).unwrap()).unwrap();
        mesh.footing_nodes.clear();
        assert!(matches!(run_dp_footing(mesh, &DpConfig::default()), Err(FemError::Config(_))));
    }
}
