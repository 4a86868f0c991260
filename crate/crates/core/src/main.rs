use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use epfem::cli_io::{run, Command, RunConfig, OUTPUT_DIR_ENV};
use epfem::linalg::LinearSolverKind;
use epfem::{FemError, Family};

#[derive(Parser, Debug)]
#[command(name = "epfem", version, about = "Elastoplastic finite-element benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Linear elastic L-shaped body.
    Elasticity(Common),
    /// Cyclic traction with von Mises kinematic hardening.
    PlasticityVm {
        #[command(flatten)]
        common: Common,
        /// Number of uniform time steps over t in [0, 4].
        #[arg(long)]
        n_steps: Option<usize>,
    },
    /// Strip footing with Drucker-Prager perfect plasticity.
    PlasticityDp {
        #[command(flatten)]
        common: Common,
        /// Initial footing displacement increment.
        #[arg(long)]
        du0: Option<f64>,
        /// Relative pressure increment that triggers doubling of the increment.
        #[arg(long)]
        theta: Option<f64>,
        /// Final footing displacement.
        #[arg(long)]
        u_max: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Elem {
    P1,
    P2,
    Q1,
    Q2,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Solver {
    Direct,
    Pcg,
}

#[derive(clap::Args, Debug)]
struct Common {
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    dim: u8,
    #[arg(long, value_enum, ignore_case = true, default_value = "p1")]
    elem: Elem,
    #[arg(long, default_value_t = 1)]
    level: u32,
    /// Output directory (default: $EPFEM_OUTPUT_DIR, else ./output).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    eps_newton: Option<f64>,
    #[arg(long, value_enum, default_value = "direct")]
    solver: Solver,
}

fn config(command: Command, c: &Common) -> RunConfig {
    let family = match c.elem {
        Elem::P1 => Family::P1,
        Elem::P2 => Family::P2,
        Elem::Q1 => Family::Q1,
        Elem::Q2 => Family::Q2,
    };
    let output = c
        .out
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("output"));
    let mut cfg = RunConfig::new(command, c.dim as usize, family, c.level, output);
    cfg.eps_newton = c.eps_newton;
    cfg.linear_solver = match c.solver {
        Solver::Direct => LinearSolverKind::Direct,
        Solver::Pcg => LinearSolverKind::Pcg,
    };
    cfg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match &cli.command {
        Cmd::Elasticity(c) => config(Command::Elasticity, c),
        Cmd::PlasticityVm { common, n_steps } => {
            let mut cfg = config(Command::PlasticityVm, common);
            cfg.n_steps = *n_steps;
            cfg
        }
        Cmd::PlasticityDp { common, du0, theta, u_max } => {
            let mut cfg = config(Command::PlasticityDp, common);
            cfg.du0 = *du0;
            cfg.theta = *theta;
            cfg.u_max = *u_max;
            cfg
        }
    };
    match run(&cfg) {
        Ok(summary) => {
            print!("{}", summary.to_text());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("epfem: error: {e}");
            match e {
                FemError::Config(_) | FemError::InvalidElement(_) | FemError::Io(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
