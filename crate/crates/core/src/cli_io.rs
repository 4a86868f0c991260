//! Run configuration, benchmark dispatch and output files (legacy VTK, CSV,
//! key=value summaries).

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{FemError, Result};
use crate::linalg::LinearSolverKind;
use crate::mesh::{build_mesh_elastic_body, build_mesh_footing, Mesh};
use crate::reference_elements::{ElementType, Family};
use crate::solver::{
    run_dp_footing, run_elastic, run_vm_cyclic, DpConfig, ElasticConfig, RunResult, TangentSample, TimeStepRecord,
    VmConfig,
};

/// Environment variable that replaces the default output directory.
pub const OUTPUT_DIR_ENV: &str = "EPFEM_OUTPUT_DIR";

/// Values above this are cut off in the clamped footing displacement field.
pub const DISPLACEMENT_CLAMP: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Elasticity,
    PlasticityVm,
    PlasticityDp,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Elasticity => "elasticity",
            Command::PlasticityVm => "plasticity-vm",
            Command::PlasticityDp => "plasticity-dp",
        })
    }
}

impl FromStr for Command {
    type Err = FemError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elasticity" => Ok(Command::Elasticity),
            "plasticity-vm" => Ok(Command::PlasticityVm),
            "plasticity-dp" => Ok(Command::PlasticityDp),
            _ => Err(FemError::Config(format!("unknown command '{s}'"))),
        }
    }
}

fn solver_name(kind: LinearSolverKind) -> &'static str {
    match kind {
        LinearSolverKind::Direct => "direct",
        LinearSolverKind::Pcg => "pcg",
    }
}

pub fn parse_solver(s: &str) -> Result<LinearSolverKind> {
    match s {
        "direct" => Ok(LinearSolverKind::Direct),
        "pcg" => Ok(LinearSolverKind::Pcg),
        _ => Err(FemError::Config(format!("unknown linear solver '{s}'"))),
    }
}

/// Everything needed to reproduce a run. Unset overrides fall back to the
/// benchmark defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub dim: usize,
    pub elem: Family,
    pub level: u32,
    pub output: PathBuf,
    pub eps_newton: Option<f64>,
    pub n_steps: Option<usize>,
    pub du0: Option<f64>,
    pub theta: Option<f64>,
    pub u_max: Option<f64>,
    pub linear_solver: LinearSolverKind,
}

impl RunConfig {
    pub fn new(command: Command, dim: usize, elem: Family, level: u32, output: PathBuf) -> Self {
        RunConfig {
            command,
            dim,
            elem,
            level,
            output,
            eps_newton: None,
            n_steps: None,
            du0: None,
            theta: None,
            u_max: None,
            linear_solver: LinearSolverKind::Direct,
        }
    }

    pub fn elem_type(&self) -> Result<ElementType> {
        ElementType::new(self.elem, self.dim)
    }

    /// `key=value` lines; unset overrides are omitted.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command={}", self.command);
        let _ = writeln!(s, "dim={}", self.dim);
        let _ = writeln!(s, "elem={}", self.elem);
        let _ = writeln!(s, "level={}", self.level);
        let _ = writeln!(s, "output={}", self.output.display());
        if let Some(v) = self.eps_newton {
            let _ = writeln!(s, "eps_newton={v:e}");
        }
        if let Some(v) = self.n_steps {
            let _ = writeln!(s, "n_steps={v}");
        }
        if let Some(v) = self.du0 {
            let _ = writeln!(s, "du0={v:e}");
        }
        if let Some(v) = self.theta {
            let _ = writeln!(s, "theta={v:e}");
        }
        if let Some(v) = self.u_max {
            let _ = writeln!(s, "u_max={v:e}");
        }
        let _ = writeln!(s, "linear_solver={}", solver_name(self.linear_solver));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let pairs = parse_key_values(text)?;
        let get = |k: &str| pairs.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let req = |k: &str| get(k).ok_or_else(|| FemError::Config(format!("missing key '{k}'")));
        let num = |k: &str, v: &str| FemError::Config(format!("bad value '{v}' for '{k}'"));
        let mut cfg = RunConfig::new(
            req("command")?.parse()?,
            req("dim")?.parse().map_err(|_| num("dim", req("dim").unwrap_or_default()))?,
            req("elem")?.parse()?,
            req("level")?.parse().map_err(|_| num("level", req("level").unwrap_or_default()))?,
            PathBuf::from(req("output")?),
        );
        fn opt<T: FromStr>(v: Option<&str>, k: &str) -> Result<Option<T>> {
            v.map(|s| s.parse::<T>().map_err(|_| FemError::Config(format!("bad value '{s}' for '{k}'"))))
                .transpose()
        }
        cfg.eps_newton = opt(get("eps_newton"), "eps_newton")?;
        cfg.n_steps = opt(get("n_steps"), "n_steps")?;
        cfg.du0 = opt(get("du0"), "du0")?;
        cfg.theta = opt(get("theta"), "theta")?;
        cfg.u_max = opt(get("u_max"), "u_max")?;
        if let Some(s) = get("linear_solver") {
            cfg.linear_solver = parse_solver(s)?;
        }
        cfg.elem_type()?;
        Ok(cfg)
    }
}

/// Parses `key=value` lines, skipping blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| FemError::Config(format!("expected key=value, got '{l}'")))
        })
        .collect()
}

/// A nodal or cellwise field with `n_comp` interleaved components.
#[derive(Clone, Copy, Debug)]
pub struct Field<'a> {
    pub name: &'a str,
    pub n_comp: usize,
    pub data: &'a [f64],
}

/// VTK cell type id and the permutation from our local node order to VTK's.
pub fn vtk_cell(elem: ElementType) -> (u8, Vec<usize>) {
    let id = match (elem.family, elem.dim) {
        (Family::P1, 2) => 5,
        (Family::Q1, 2) => 9,
        (Family::P2, 2) => 22,
        (Family::Q2, 2) => 23,
        (Family::P1, _) => 10,
        (Family::Q1, _) => 12,
        (Family::P2, _) => 24,
        (Family::Q2, _) => 25,
    };
    let order = if elem.family == Family::P2 && elem.dim == 3 {
        vec![0, 1, 2, 3, 4, 5, 6, 9, 7, 8]
    } else {
        (0..elem.n_nodes()).collect()
    };
    (id, order)
}

fn write_field(s: &mut String, f: &Field, n: usize) -> Result<()> {
    if f.n_comp == 0 || f.data.len() != f.n_comp * n {
        return Err(FemError::DimensionMismatch(format!(
            "field '{}' has {} values, expected {} x {n}",
            f.name,
            f.data.len(),
            f.n_comp
        )));
    }
    if f.name.is_empty() || f.name.contains(char::is_whitespace) {
        return Err(FemError::Config(format!("invalid field name '{}'", f.name)));
    }
    match f.n_comp {
        1 => {
            let _ = writeln!(s, "SCALARS {} double 1\nLOOKUP_TABLE default", f.name);
            for v in f.data {
                let _ = writeln!(s, "{v:e}");
            }
        }
        2 | 3 => {
            let _ = writeln!(s, "VECTORS {} double", f.name);
            for c in f.data.chunks_exact(f.n_comp) {
                let z = if f.n_comp == 3 { c[2] } else { 0.0 };
                let _ = writeln!(s, "{:e} {:e} {z:e}", c[0], c[1]);
            }
        }
        k => {
            let _ = writeln!(s, "FIELD {} 1\n{} {k} {n} double", f.name, f.name);
            for c in f.data.chunks_exact(k) {
                let line: Vec<String> = c.iter().map(|v| format!("{v:e}")).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        }
    }
    Ok(())
}

/// Writes a legacy ASCII unstructured-grid file. With `displacement` the
/// nodes are moved to `x + u`.
pub fn write_vtk_deformed(
    mesh: &Mesh,
    displacement: Option<&[f64]>,
    point_fields: &[Field],
    cell_fields: &[Field],
    path: &Path,
) -> Result<()> {
    let dim = mesh.dim();
    if let Some(u) = displacement {
        if u.len() != mesh.n_dofs() {
            return Err(FemError::DimensionMismatch(format!("{} displacements for {} dofs", u.len(), mesh.n_dofs())));
        }
    }
    let (cell_type, order) = vtk_cell(mesh.elem_type);
    let (nn, ne, np) = (mesh.n_nodes(), mesh.n_elems(), mesh.n_nodes_per_elem());
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\nepfem {}\nASCII\nDATASET UNSTRUCTURED_GRID", mesh.elem_type);
    let _ = writeln!(s, "POINTS {nn} double");
    for (n, x) in mesh.coords.iter().enumerate() {
        let mut y = *x;
        if let Some(u) = displacement {
            for i in 0..dim {
                y[i] += u[dim * n + i];
            }
        }
        let _ = writeln!(s, "{:e} {:e} {:e}", y[0], y[1], y[2]);
    }
    let _ = writeln!(s, "CELLS {ne} {}", ne * (np + 1));
    for e in 0..ne {
        let el = mesh.elem(e);
        let _ = write!(s, "{np}");
        for &k in &order {
            let _ = write!(s, " {}", el[k]);
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    for _ in 0..ne {
        let _ = writeln!(s, "{cell_type}");
    }
    if !point_fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {nn}");
        for f in point_fields {
            write_field(&mut s, f, nn)?;
        }
    }
    if !cell_fields.is_empty() {
        let _ = writeln!(s, "CELL_DATA {ne}");
        for f in cell_fields {
            write_field(&mut s, f, ne)?;
        }
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn write_vtk(mesh: &Mesh, point_fields: &[Field], cell_fields: &[Field], path: &Path) -> Result<()> {
    write_vtk_deformed(mesh, None, point_fields, cell_fields, path)
}

pub const CSV_HEADER: &str = "k,load,newton_iters,n_plastic,tangent_seconds,derived_scalar";

/// One row per record, floats with 17 significant digits.
pub fn write_csv_records(records: &[TimeStepRecord], path: &Path) -> Result<()> {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{:.16e},{},{},{:.16e},{:.16e}",
            r.step, r.load, r.newton_iters, r.n_plastic, r.tangent_seconds, r.derived
        );
    }
    fs::write(path, s)?;
    Ok(())
}

/// Inverse of [`write_csv_records`].
pub fn read_csv_records(path: &Path) -> Result<Vec<TimeStepRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(FemError::Config(format!("{} lacks the record header", path.display())));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let bad = || FemError::Config(format!("malformed record '{l}'"));
            let t: Vec<&str> = l.split(',').collect();
            if t.len() != 6 {
                return Err(bad());
            }
            Ok(TimeStepRecord {
                step: t[0].parse().map_err(|_| bad())?,
                load: t[1].parse().map_err(|_| bad())?,
                newton_iters: t[2].parse().map_err(|_| bad())?,
                n_plastic: t[3].parse().map_err(|_| bad())?,
                tangent_seconds: t[4].parse().map_err(|_| bad())?,
                derived: t[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn write_tangent_samples(samples: &[TangentSample], path: &Path) -> Result<()> {
    let mut s = String::from("n_plastic,seconds\n");
    for t in samples {
        let _ = writeln!(s, "{},{:.16e}", t.n_plastic, t.seconds);
    }
    fs::write(path, s)?;
    Ok(())
}

/// Average of a per-integration-point quantity over each element.
pub fn element_average(values: &[f64], n_elems: usize) -> Vec<f64> {
    if n_elems == 0 {
        return vec![];
    }
    let n_q = values.len() / n_elems;
    values.chunks_exact(n_q).map(|c| c.iter().sum::<f64>() / n_q as f64).collect()
}

/// Nodal displacement magnitude capped at `clamp` (visualisation only).
pub fn clamped_magnitude(u: &[f64], dim: usize, clamp: f64) -> Vec<f64> {
    u.chunks_exact(dim).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt().min(clamp)).collect()
}

/// Flat summary of a finished run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub entries: Vec<(String, String)>,
}

impl RunSummary {
    pub fn push(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// Runs the configured benchmark and writes its outputs into `cfg.output`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let elem = cfg.elem_type()?;
    fs::create_dir_all(&cfg.output)?;
    let out = |name: &str| cfg.output.join(name);
    let mut summary = RunSummary::default();
    for (k, v) in parse_key_values(&cfg.to_text())? {
        summary.push(&k, v);
    }

    let result: RunResult = match cfg.command {
        Command::Elasticity => {
            let mut c = ElasticConfig::default();
            apply_newton_overrides(cfg, &mut c.settings);
            run_elastic(build_mesh_elastic_body(cfg.level, elem)?, &c)?
        }
        Command::PlasticityVm => {
            let mut c = VmConfig::default();
            apply_newton_overrides(cfg, &mut c.settings);
            if let Some(n) = cfg.n_steps {
                c.n_steps = n;
            }
            run_vm_cyclic(build_mesh_elastic_body(cfg.level, elem)?, &c)?
        }
        Command::PlasticityDp => {
            let mut c = DpConfig::default();
            apply_newton_overrides(cfg, &mut c.settings);
            if let Some(v) = cfg.du0 {
                c.du0 = v;
            }
            if let Some(v) = cfg.theta {
                c.theta = v;
            }
            if let Some(v) = cfg.u_max {
                c.u_max = v;
            }
            run_dp_footing(build_mesh_footing(cfg.level, elem)?, &c)?
        }
    };

    let mesh = &result.problem.mesh;
    let dim = mesh.dim();
    summary.push("n_nodes", mesh.n_nodes());
    summary.push("n_elems", mesh.n_elems());
    summary.push("n_dofs", mesh.n_dofs());
    summary.push("n_free_dofs", mesh.free.iter().filter(|&&f| f).count());
    summary.push("n_int", result.problem.cache.n_int());
    summary.push("steps", result.records.len());
    summary.push("newton_iters_total", result.records.iter().map(|r| r.newton_iters).sum::<usize>());
    summary.push("elastic_assembly_seconds", format!("{:e}", result.problem.cache.elastic_assembly_seconds));
    let max_u = clamped_magnitude(&result.u, dim, f64::INFINITY).into_iter().fold(0.0, f64::max);
    summary.push("max_displacement", format!("{max_u:e}"));

    let disp = Field { name: "displacement", n_comp: dim, data: &result.u };
    match cfg.command {
        Command::Elasticity => {
            write_vtk(mesh, &[disp], &[], &out("displacement.vtk"))?;
            write_vtk_deformed(mesh, Some(&result.u), &[disp], &[], &out("deformed.vtk"))?;
        }
        Command::PlasticityVm => {
            write_csv_records(&result.records, &out("hysteresis.csv"))?;
            write_tangent_samples(&result.samples, &out("tangent_timing.csv"))?;
            for snap in &result.snapshots {
                let cell = element_average(&snap.hardening_norm, mesh.n_elems());
                write_vtk(
                    mesh,
                    &[],
                    &[Field { name: "hardening_norm", n_comp: 1, data: &cell }],
                    &out(&format!("hardening_step{:03}.vtk", snap.step)),
                )?;
            }
            write_vtk(mesh, &[disp], &[], &out("displacement.vtk"))?;
            if let Some(last) = result.records.last() {
                summary.push("final_load_scale", format!("{:e}", last.load));
                summary.push("final_work", format!("{:e}", last.derived));
            }
            let peak = result.records.iter().map(|r| r.derived.abs()).fold(0.0, f64::max);
            summary.push("peak_work", format!("{peak:e}"));
        }
        Command::PlasticityDp => {
            write_csv_records(&result.records, &out("loadpath.csv"))?;
            write_tangent_samples(&result.samples, &out("tangent_timing.csv"))?;
            let clamped = clamped_magnitude(&result.u, dim, DISPLACEMENT_CLAMP);
            write_vtk(
                mesh,
                &[disp, Field { name: "total_displacement_clamped", n_comp: 1, data: &clamped }],
                &[],
                &out("displacement.vtk"),
            )?;
            if let Some(p) = result.limit_pressure {
                summary.push("limit_pressure_over_c0", format!("{p:e}"));
            }
            if let Some(last) = result.records.last() {
                summary.push("final_footing_displacement", format!("{:e}", last.load));
            }
            if let Some(r) = &result.stop_reason {
                summary.push("stop_reason", r.replace('\n', " "));
            }
        }
    }
    fs::write(out("summary.txt"), summary.to_text())?;
    Ok(summary)
}

fn apply_newton_overrides(cfg: &RunConfig, settings: &mut crate::solver::NewtonSettings) {
    if let Some(e) = cfg.eps_newton {
        settings.eps_newton = e;
    }
    settings.linear_solver = cfg.linear_solver;
}
