//! End-to-end checks of the command layer: reproducibility of outputs,
//! config snapshots, and validation behavior.

use std::fs;

use nurn_cli::commands::run_command;
use nurn_cli::config::{ExperimentConfig, ExprSpec, KernelSpec};
use nurn_cli::CliError;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed: 7,
        n: 16,
        m: 32,
        dt: 1e-2,
        horizon: 0.5,
        sample_times: vec![0.25, 0.5],
        replicas: 2,
        kernel: KernelSpec::Product {
            lambda1: ExprSpec::Affine { a: 1.0, b: 1.0 },
            lambda2: ExprSpec::Affine { a: 2.0, b: -1.0 },
        },
        phi: ExprSpec::Affine { a: 1.0, b: 0.5 },
        ..ExperimentConfig::default()
    };
    cfg.clt.t = 0.5;
    cfg
}

fn read_all(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

#[test]
fn simulate_reruns_are_byte_identical() {
    let cfg = small_config();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    run_command("simulate", &cfg, d1.path()).unwrap();
    run_command("simulate", &cfg, d2.path()).unwrap();
    let f1 = read_all(d1.path());
    let f2 = read_all(d2.path());
    assert_eq!(
        f1.len(),
        2 + 1,
        "two replica files plus the config snapshot"
    );
    assert_eq!(f1, f2);
}

#[test]
fn different_seeds_change_the_ensemble() {
    let cfg = small_config();
    let mut other = cfg.clone();
    other.seed = 8;
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    run_command("simulate", &cfg, d1.path()).unwrap();
    run_command("simulate", &other, d2.path()).unwrap();
    let f1 = read_all(d1.path());
    let f2 = read_all(d2.path());
    assert_ne!(f1, f2);
}

#[test]
fn resolved_config_snapshot_round_trips() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    run_command("hydro", &cfg, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("config_resolved.toml")).unwrap();
    let back = ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(cfg, back);
}

#[test]
fn hydro_csv_has_provenance_and_matches_the_closed_form() {
    let mut cfg = small_config();
    cfg.kernel = KernelSpec::Constant { value: 1.0 };
    cfg.sample_times = vec![0.5];
    let dir = tempfile::tempdir().unwrap();
    run_command("hydro", &cfg, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("hydro.csv")).unwrap();
    let mut lines = text.lines();
    let provenance = lines.next().unwrap();
    assert!(provenance.starts_with("# nurn config_hash="));
    assert_eq!(lines.next().unwrap(), "time,x,rho");

    // Node average conserved, deviations decay at unit rate.
    let phi = |x: f64| 1.0 + 0.5 * x;
    let m = cfg.m as f64;
    let mbar: f64 = (1..=cfg.m).map(|j| phi(j as f64 / m)).sum::<f64>() / m;
    for line in lines {
        let fields: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let (t, x, rho) = (fields[0], fields[1], fields[2]);
        let expect = mbar + (phi(x) - mbar) * (-t).exp();
        assert!(
            (rho - expect).abs() <= 1e-6,
            "rho({t},{x}) = {rho} vs {expect}"
        );
    }
}

#[test]
fn validation_failures_are_enumerated_and_exit_code_is_1() {
    let mut cfg = small_config();
    cfg.n = 0;
    cfg.dt = -1.0;
    cfg.replicas = 0;
    let dir = tempfile::tempdir().unwrap();
    let err = run_command("simulate", &cfg, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    match err {
        CliError::Validation(problems) => {
            assert!(problems.len() >= 3, "got {problems:?}");
        }
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn ldp_command_runs_on_a_path_csv() {
    // Write a stationary path for the product kernel and evaluate it.
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let m = 32;
    let mut csv = String::from("time,x,psi\n");
    for s in 0..5 {
        let t = s as f64 * 0.05;
        for j in 1..=m {
            let x = j as f64 / m as f64;
            let psi = (2.0 - x) / (1.0 + x);
            csv.push_str(&format!("{t},{x},{psi}\n"));
        }
    }
    let path_file = dir.path().join("path.csv");
    fs::write(&path_file, csv).unwrap();

    let mut cfg2 = cfg;
    cfg2.ldp.path_csv = path_file.to_string_lossy().into_owned();
    let out = tempfile::tempdir().unwrap();
    run_command("ldp", &cfg2, out.path()).unwrap();
    let rates = fs::read_to_string(out.path().join("rates.csv")).unwrap();
    assert!(rates.contains("I_dyn"));
    assert!(rates.contains("C_s_first"));
    // Stationary path of this kernel: the dynamic rate vanishes.
    let idyn: f64 = rates
        .lines()
        .find(|l| l.starts_with("I_dyn,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(idyn.abs() <= 1e-8, "I_dyn = {idyn}");
}

#[test]
fn unknown_command_is_a_validation_error() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let err = run_command("frobnicate", &cfg, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn numerical_failures_exit_with_code_2() {
    // A path density with a vanishing node breaks the control-field
    // construction: domain error from the core, exit code 2 here.
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let m = 32;
    let mut csv = String::from("time,x,psi\n");
    for s in 0..4 {
        let t = s as f64 * 0.05;
        for j in 1..=m {
            let x = j as f64 / m as f64;
            let psi = if j == 5 { 0.0 } else { 1.0 };
            csv.push_str(&format!("{t},{x},{psi}\n"));
        }
    }
    let path_file = dir.path().join("bad_path.csv");
    fs::write(&path_file, csv).unwrap();
    let mut cfg2 = cfg;
    cfg2.ldp.path_csv = path_file.to_string_lossy().into_owned();
    let out = tempfile::tempdir().unwrap();
    let err = run_command("ldp", &cfg2, out.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
