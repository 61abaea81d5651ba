//! One function per subcommand. Every command reads only the resolved
//! configuration, writes CSVs through [`OutputDir`], and returns through the
//! shared error type so exit codes stay uniform.

use std::path::Path;

use nurn_core::fluct::{clt_check, sample_fluctuation, theta_sq};
use nurn_core::hydro::{density_expm, solve_density};
use nurn_core::ldp as ldpmod;
use nurn_core::ldp::{ControlField, PathDensity};
use nurn_core::seed::replica_rng;
use nurn_core::sim::{sample_initial, Simulator};
use nurn_core::stats;
use nurn_core::{GridSpec, TestFunction};

use crate::config::{ExperimentConfig, HydroMethod, TrialFieldId};
use crate::output::{fmt, OutputDir};
use crate::CliError;

fn grid(m: usize) -> Result<GridSpec, CliError> {
    GridSpec::new(m).map_err(CliError::from)
}

/// Deterministic density solve; CSV columns time,x,rho.
/// Rows are limited to the configured sample times when any are set.
pub fn run_hydro(cfg: &ExperimentConfig, out: &OutputDir) -> Result<(), CliError> {
    let g = grid(cfg.m)?;
    let k = cfg
        .build_kernel()
        .map_err(|e| CliError::Validation(vec![e]))?;
    let phi = TestFunction::new(g, cfg.phi.sample(cfg.m))?;

    let mut rows = Vec::new();
    match cfg.hydro.method {
        HydroMethod::Rk4 => {
            let field = solve_density(&phi, &k, cfg.dt, cfg.horizon)?;
            let emit: Vec<usize> = if cfg.sample_times.is_empty() {
                (0..field.times.len()).collect()
            } else {
                cfg.sample_times
                    .iter()
                    .map(|&t| {
                        field
                            .times
                            .iter()
                            .position(|&u| (u - t).abs() <= 0.5 * cfg.dt)
                            .ok_or_else(|| {
                                CliError::Validation(vec![format!(
                                    "sample time {t} not on the dt grid"
                                )])
                            })
                    })
                    .collect::<Result<_, _>>()?
            };
            for idx in emit {
                let snap = field.snapshot(idx);
                for (j, v) in snap.values.iter().enumerate() {
                    rows.push(format!(
                        "{},{},{}",
                        fmt(field.times[idx]),
                        fmt(g.node(j)),
                        fmt(*v)
                    ));
                }
            }
        }
        HydroMethod::Expm => {
            let times = if cfg.sample_times.is_empty() {
                vec![cfg.horizon]
            } else {
                cfg.sample_times.clone()
            };
            for t in times {
                let snap = density_expm(&phi, &k, t)?;
                for (j, v) in snap.values.iter().enumerate() {
                    rows.push(format!("{},{},{}", fmt(t), fmt(g.node(j)), fmt(*v)));
                }
            }
        }
    }
    out.write_csv("hydro.csv", "time,x,rho", &rows)
}

/// Seeded ensemble simulation; one CSV per replica with columns
/// time,box_index,count. Replicas fan out across worker threads; file
/// writing stays serialized in replica order.
pub fn run_simulate(cfg: &ExperimentConfig, out: &OutputDir) -> Result<(), CliError> {
    let k = cfg
        .build_kernel()
        .map_err(|e| CliError::Validation(vec![e]))?;
    let dk = k.discretize(cfg.n)?;
    let sim = Simulator::new(&dk);
    let phi = cfg.phi.sample(cfg.n);

    use rayon::prelude::*;
    let trajectories: Vec<nurn_core::Trajectory> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<nurn_core::Trajectory, nurn_core::Error> {
            let mut rng = replica_rng(cfg.seed, r);
            let x0 = sample_initial(&phi, cfg.n, &mut rng)?;
            sim.simulate(&x0, &cfg.sample_times, &mut rng)
        })
        .collect::<Result<_, _>>()?;

    for (r, traj) in trajectories.iter().enumerate() {
        let mut rows = Vec::new();
        for (t, counts) in &traj.snapshots {
            for (i, c) in counts.counts.iter().enumerate() {
                rows.push(format!("{},{},{}", fmt(*t), i + 1, c));
            }
        }
        out.write_csv(
            &format!("simulate_replica_{r:04}.csv"),
            "time,box_index,count",
            &rows,
        )?;
    }
    Ok(())
}

/// Fluctuation variance check: formula θ² against the seeded ensemble.
/// The formula is evaluated on the n-grid so solver nodes coincide with the
/// box nodes being simulated. CSV columns
/// t,test_function,theta_sq_formula,theta_sq_empirical,se,z.
pub fn run_clt(cfg: &ExperimentConfig, out: &OutputDir) -> Result<(), CliError> {
    let k = cfg
        .build_kernel()
        .map_err(|e| CliError::Validation(vec![e]))?;
    let g = grid(cfg.n)?;
    let t = cfg.clt.t;
    let h_id = cfg.clt.test_function;

    let h_n = TestFunction::new(g, h_id.sample(cfg.n))?;
    let phi_n = TestFunction::new(g, cfg.phi.sample(cfg.n))?;
    let formula = theta_sq(t, &h_n, &phi_n, &k, cfg.clt.s_steps)?;

    let sim_cfg = nurn_core::sim::SimConfig {
        n: cfg.n,
        horizon: cfg.horizon.max(t),
        sample_times: vec![t],
        seed: cfg.seed,
        replicas: cfg.replicas,
    };
    let samples = sample_fluctuation(t, &h_id.sample(cfg.n), &cfg.phi.sample(cfg.n), &sim_cfg, &k)?;
    let report = clt_check(&samples, formula)?;

    let rows = vec![format!(
        "{},{},{},{},{},{}",
        fmt(t),
        h_id.name(),
        fmt(report.theta_sq_formula),
        fmt(report.theta_sq_empirical),
        fmt(report.standard_error),
        fmt(report.z_score)
    )];
    out.write_csv(
        "clt.csv",
        "t,test_function,theta_sq_formula,theta_sq_empirical,se,z",
        &rows,
    )?;

    if let Ok(diag) = stats::normality_diagnostic(&samples) {
        println!(
            "normality: skewness {:.4} (se {:.4}), excess kurtosis {:.4} (se {:.4})",
            diag.skewness, diag.skewness_se, diag.excess_kurtosis, diag.excess_kurtosis_se
        );
    }
    println!(
        "clt: theta_sq formula {} empirical {} z {}",
        fmt(report.theta_sq_formula),
        fmt(report.theta_sq_empirical),
        fmt(report.z_score)
    );
    Ok(())
}

fn trial_fields(g: GridSpec, family: &[TrialFieldId]) -> Result<Vec<ControlField>, CliError> {
    family
        .iter()
        .map(|id| {
            ControlField::time_constant(g, g.nodes().map(|x| id.eval(x)).collect())
                .map_err(CliError::from)
        })
        .collect()
}

/// Rate-function evaluation on a path density. CSV columns quantity,value.
pub fn run_ldp(cfg: &ExperimentConfig, out: &OutputDir) -> Result<(), CliError> {
    let k = cfg
        .build_kernel()
        .map_err(|e| CliError::Validation(vec![e]))?;

    let path: PathDensity = if cfg.ldp.path_csv.is_empty() {
        let g = grid(cfg.m)?;
        let phi = TestFunction::new(g, cfg.phi.sample(cfg.m))?;
        ldpmod::hydro_path(&phi, &k, cfg.dt, cfg.horizon)?
    } else {
        let text = std::fs::read_to_string(&cfg.ldp.path_csv)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", cfg.ldp.path_csv)))?;
        let dpsi = if cfg.ldp.dpsi_csv.is_empty() {
            None
        } else {
            Some(
                std::fs::read_to_string(&cfg.ldp.dpsi_csv)
                    .map_err(|e| CliError::Io(format!("reading {}: {e}", cfg.ldp.dpsi_csv)))?,
            )
        };
        ldpmod::read_path_csv(&text, dpsi.as_deref())?
    };

    let g = path.grid;
    let phi_ref = TestFunction::new(g, cfg.phi.sample(g.len()))?;
    let mut rows = Vec::new();
    let psi0 = path.snapshot(0);
    rows.push(format!(
        "I_ini,{}",
        fmt(ldpmod::rate_initial(&psi0, &phi_ref)?)
    ));
    rows.push(format!("d0_violation,{}", fmt(path.d0_violation())));

    let trials = trial_fields(g, &cfg.ldp.trial_family)?;
    let lower = ldpmod::rate_dynamic_lower_bound(&path, &k, &trials)?;
    rows.push(format!("I_dyn_lower_bound,{}", fmt(lower)));

    // The optimal-field construction needs Assumption B; general kernels
    // stop at the trial-family lower bound.
    if k.marginals().is_some() {
        let built = ldpmod::control_field(&path, &k)?;
        let idyn = ldpmod::rate_dynamic(&path, &built.field, &k)?;
        let residual = ldpmod::balance_residual(&path, &built.field, &k)?;
        rows.push(format!("I_dyn,{}", fmt(idyn)));
        rows.push(format!("residual_sup,{}", fmt(residual)));
        rows.push(format!("C_s_first,{}", fmt(built.cs[0])));
        rows.push(format!("C_s_last,{}", fmt(*built.cs.last().unwrap())));
    }
    out.write_csv("rates.csv", "quantity,value", &rows)?;
    for row in &rows {
        println!("{row}");
    }
    Ok(())
}

/// Monte Carlo check that the exponential martingale has unit mean.
/// CSV columns t,lambda_mean,lambda_se,replicas.
pub fn run_martingale(cfg: &ExperimentConfig, out: &OutputDir) -> Result<(), CliError> {
    let k = cfg
        .build_kernel()
        .map_err(|e| CliError::Validation(vec![e]))?;
    let n = cfg.martingale.n;
    let g = grid(n.max(2))?;
    if g.len() != n {
        return Err(CliError::Validation(vec![format!(
            "martingale.n = {n} must be >= 2 for a grid"
        )]));
    }
    let g_values: Vec<f64> = cfg.martingale.g.sample(n);
    let sup_g = g_values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if n > 10 || sup_g > 0.5 {
        eprintln!(
            "warning: martingale evaluation scales like exp(n); n = {n}, sup|G| = {sup_g:.3} \
             is outside the recommended envelope (n <= 10, sup|G| <= 0.5) and the ensemble \
             mean will have heavy tails"
        );
    }
    let field = ControlField::time_constant(g, g_values)?;
    let phi = cfg.phi.sample(n);
    let est = ldpmod::martingale_mean(
        &k,
        &phi,
        n,
        &field,
        cfg.horizon,
        cfg.seed,
        cfg.martingale.replicas,
    )?;
    let rows = vec![format!(
        "{},{},{},{}",
        fmt(est.t),
        fmt(est.mean),
        fmt(est.standard_error),
        est.replicas
    )];
    out.write_csv("martingale.csv", "t,lambda_mean,lambda_se,replicas", &rows)?;
    println!(
        "martingale: mean {} +- {} over {} replicas",
        fmt(est.mean),
        fmt(est.standard_error),
        est.replicas
    );
    Ok(())
}

/// Dispatch used by main and by the integration tests.
pub fn run_command(command: &str, cfg: &ExperimentConfig, out_root: &Path) -> Result<(), CliError> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    if cfg.threads > 0 {
        // Ignore failure: the global pool can only be initialized once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    let out = OutputDir::create(out_root, cfg)?;
    match command {
        "hydro" => run_hydro(cfg, &out),
        "simulate" => run_simulate(cfg, &out),
        "clt" => run_clt(cfg, &out),
        "ldp" => run_ldp(cfg, &out),
        "martingale" => run_martingale(cfg, &out),
        "acceptance" => {
            let outcomes = crate::acceptance::run_acceptance(cfg.seed, out.path())?;
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            if failed > 0 {
                Err(CliError::AcceptanceFailed(failed))
            } else {
                Ok(())
            }
        }
        other => Err(CliError::Validation(vec![format!(
            "unknown command `{other}`"
        )])),
    }
}
