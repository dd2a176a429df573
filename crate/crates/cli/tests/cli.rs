use std::process::{Command, Output};

fn convsn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convsn"))
        .args(args)
        .output()
        .expect("spawn convsn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn quadrature_dump_lists_every_direction() {
    let o = convsn(&["quadrature", "dump", "--na", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("face,index,mu,nu,xi,weight"));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 32);
    let total: f64 = rows
        .iter()
        .map(|r| r.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn filters_dump_every_order() {
    for order in ["linear", "quadratic", "cubic", "quintic"] {
        let o = convsn(&["filters", "dump", "--order", order, "--dx", "0.5"]);
        assert!(o.status.success(), "{order}");
        assert!(stdout(&o).starts_with("order,name,l,dx,dy"));
    }
}

#[test]
fn invalid_arguments_exit_with_status_two() {
    assert_eq!(
        convsn(&["quadrature", "dump", "--na", "3"]).status.code(),
        Some(2)
    );
    assert_eq!(
        convsn(&["duct", "--scheme", "upwind", "--order", "cubic"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(convsn(&["duct", "--dx", "0.3"]).status.code(), Some(2));
    assert_eq!(
        convsn(&["filters", "dump", "--order", "septic"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn oracle_compare_matches() {
    let o = convsn(&[
        "oracle", "compare", "--nx", "6", "--ny", "6", "--na", "1", "--groups", "2", "--seed", "3",
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("match"));
}

#[test]
fn duct_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("duct");
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "scheme = upwind\nmg-iters = 40\n").unwrap();
    let o = convsn(&[
        "--threads",
        "1",
        "duct",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--profile-y",
        "5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "flux_g0.csv",
        "flux.vtk",
        "profile_x14.csv",
        "metrics.csv",
        "manifest.txt",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(std::fs::read_dir(&out).unwrap().any(|e| e
        .unwrap()
        .file_name()
        .to_string_lossy()
        .starts_with("profile_y")));
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("scheme = upwind"));
    assert!(manifest.contains("mg_iters = 40"));
    assert!(manifest.contains("converged = true"));
    let flux = std::fs::read_to_string(out.join("flux_g0.csv")).unwrap();
    assert_eq!(flux.lines().count(), 1 + 45 * 35);
}

#[test]
fn unconverged_duct_exits_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("duct");
    let o = convsn(&[
        "duct",
        "--scheme",
        "upwind",
        "--mg-iters",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not converged"));
    assert!(out.join("metrics.csv").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(
        convsn(&["duct", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn single_threaded_runs_are_bit_stable() {
    let dir = tempfile::tempdir().unwrap();
    let mut fluxes = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = convsn(&[
            "--threads",
            "1",
            "duct",
            "--scheme",
            "upwind",
            "--na",
            "2",
            "--mg-iters",
            "10",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.code().is_some());
        fluxes.push(std::fs::read(out.join("flux_g0.csv")).unwrap());
    }
    assert_eq!(fluxes[0], fluxes[1]);
}
