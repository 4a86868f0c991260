use std::path::Path;
use std::process::{Command, Output};

fn epfem(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_epfem"));
    cmd.args(args).env_remove("EPFEM_OUTPUT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "stdout: {stdout}\nstderr: {}", String::from_utf8_lossy(&out.stderr));
    stdout
}

fn summary_value(summary: &str, key: &str) -> String {
    summary
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {summary}"))
        .to_string()
}

#[test]
fn elasticity_3d_q1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = epfem(&["elasticity", "--dim", "3", "--elem", "Q1", "--level", "1", "--out", tmp.path().to_str().unwrap()], &[]);
    let s = ok(&out);
    assert_eq!(summary_value(&s, "newton_iters_total"), "2");
    for f in ["displacement.vtk", "deformed.vtk", "summary.txt"] {
        assert!(tmp.path().join(f).is_file(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(tmp.path().join("summary.txt")).unwrap(), s);
}

#[test]
fn plasticity_vm_2d_q2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = epfem(&["plasticity-vm", "--dim", "2", "--elem", "q2", "--level", "2"], &[("EPFEM_OUTPUT_DIR", tmp.path())]);
    ok(&out);
    let csv = std::fs::read_to_string(tmp.path().join("hysteresis.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 41);
    assert_eq!(lines[0], epfem::cli_io::CSV_HEADER);
    for k in [10, 20, 30, 40] {
        assert!(tmp.path().join(format!("hardening_step{k:03}.vtk")).is_file());
    }
    assert!(tmp.path().join("tangent_timing.csv").is_file());
}

#[test]
fn plasticity_dp_2d_p2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = epfem(&["plasticity-dp", "--dim", "2", "--elem", "P2", "--out", tmp.path().to_str().unwrap()], &[]);
    let s = ok(&out);
    let limit: f64 = summary_value(&s, "limit_pressure_over_c0").parse().unwrap();
    assert!(limit.is_finite() && limit > 0.0);
    let csv = std::fs::read_to_string(tmp.path().join("loadpath.csv")).unwrap();
    assert!(csv.lines().count() > 2);
    let vtk = std::fs::read_to_string(tmp.path().join("displacement.vtk")).unwrap();
    assert!(vtk.contains("SCALARS total_displacement_clamped double 1"));
}

#[test]
fn overrides_are_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = epfem(&["plasticity-vm", "--level", "0", "--n-steps", "4", "--eps-newton", "1e-9", "--solver", "pcg", "--out", dir], &[]);
    let s = ok(&out);
    assert_eq!(summary_value(&s, "steps"), "4");
    assert_eq!(summary_value(&s, "eps_newton"), "1e-9");
    assert_eq!(summary_value(&s, "linear_solver"), "pcg");
}

#[test]
fn bad_arguments_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    for args in [
        vec!["elasticity", "--dim", "4"],
        vec!["elasticity", "--elem", "p3"],
        vec!["elasticity", "--level", "-1"],
        vec!["plasticity", "--out", dir],
        vec!["plasticity-dp", "--du0", "0", "--level", "0", "--out", dir],
        vec!["plasticity-vm", "--n-steps", "0", "--level", "0", "--out", dir],
        vec![],
    ] {
        let out = epfem(&args, &[]);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
