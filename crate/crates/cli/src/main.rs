use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nurn_cli::commands::run_command;
use nurn_cli::config::{ExperimentConfig, KernelSpec, TestFunctionId, TrialFieldId};
use nurn_cli::CliError;

/// Simulation and numerical analysis of the generalized N-urn Ehrenfest
/// model.
///
/// Kernel specs use the compact grammar `constant:<c>`,
/// `product:<marginal>,<marginal>`, or `table:<csv path>` with marginals
/// drawn from the palette `constant(a)`, `affine(a,b)` (a + b·x) and
/// `sin(a,b)` (a + b·sin(2πx)). The same palette drives `phi` and the
/// martingale tilt in the config file.
#[derive(Parser)]
#[command(name = "nurn", version, about, verbatim_doc_comment)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; all randomness derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for CSV results.
    #[arg(long, global = true, default_value = "nurn-out")]
    out_dir: PathBuf,

    /// Worker threads (0 = library default).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Kernel spec override, e.g. `product:affine(1,1),affine(2,-1)`.
    #[arg(long, global = true)]
    kernel: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the macroscopic density equation and emit time,x,rho.
    Hydro(HydroArgs),
    /// Run the seeded particle ensemble and emit time,box_index,count.
    Simulate(SimArgs),
    /// Compare the fluctuation variance formula against an ensemble.
    Clt(CltArgs),
    /// Evaluate rate functionals and the control field on a path density.
    Ldp(LdpArgs),
    /// Estimate the exponential-martingale mean.
    Martingale(MartingaleArgs),
    /// Run the full acceptance suite (twice, for determinism).
    Acceptance,
}

#[derive(Args)]
struct HydroArgs {
    /// Solver grid size.
    #[arg(long)]
    grid_m: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// rk4 or expm.
    #[arg(long)]
    method: Option<String>,
}

#[derive(Args)]
struct SimArgs {
    /// Box count.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Args)]
struct CltArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Trapezoid panels for the time integral in theta.
    #[arg(long)]
    s_steps: Option<usize>,
    /// one, linear or sin.
    #[arg(long)]
    test_function: Option<String>,
    /// Observation time.
    #[arg(long)]
    t: Option<f64>,
}

#[derive(Args)]
struct LdpArgs {
    /// Path density CSV (time,x,psi); defaults to the hydrodynamic path of
    /// the configured phi and kernel.
    #[arg(long)]
    path_csv: Option<PathBuf>,
    /// Companion exact-derivative CSV (time,x,dpsi).
    #[arg(long)]
    dpsi_csv: Option<PathBuf>,
    /// Comma-separated trial fields: constant,linear-x,sin-x.
    #[arg(long)]
    trial_family: Option<String>,
}

#[derive(Args)]
struct MartingaleArgs {
    /// Box count for the martingale run (guidance: n <= 10).
    #[arg(long)]
    martingale_n: Option<usize>,
    #[arg(long)]
    martingale_replicas: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
}

/// A horizon shrunk from the command line drags the dependent defaults
/// (sample times, observation time) down with it; flags win over the file.
fn clamp_to_horizon(cfg: &mut ExperimentConfig, horizon: f64) {
    cfg.horizon = horizon;
    cfg.sample_times.retain(|t| *t <= horizon);
    if cfg.clt.t > horizon {
        cfg.clt.t = horizon;
    }
}

fn resolve_config(cli: &Cli) -> Result<(String, ExperimentConfig), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(vec![format!("cannot read {path:?}: {e}")]))?;
            ExperimentConfig::from_toml(&text).map_err(|e| CliError::Validation(vec![e]))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if let Some(spec) = &cli.kernel {
        // Validate eagerly so bad specs exit with code 1.
        nurn_core::RateKernel::parse(spec)
            .map_err(|e| CliError::Validation(vec![e.to_string()]))?;
        cfg.kernel = kernel_spec_from_grammar(spec)?;
    }

    let name = match &cli.command {
        Command::Hydro(a) => {
            if let Some(m) = a.grid_m {
                cfg.m = m;
            }
            if let Some(dt) = a.dt {
                cfg.dt = dt;
            }
            if let Some(h) = a.horizon {
                clamp_to_horizon(&mut cfg, h);
            }
            if let Some(method) = &a.method {
                cfg.hydro.method = match method.as_str() {
                    "rk4" => nurn_cli::config::HydroMethod::Rk4,
                    "expm" => nurn_cli::config::HydroMethod::Expm,
                    other => {
                        return Err(CliError::Validation(vec![format!(
                            "unknown hydro method `{other}` (rk4|expm)"
                        )]))
                    }
                };
            }
            "hydro"
        }
        Command::Simulate(a) => {
            if let Some(n) = a.n {
                cfg.n = n;
            }
            if let Some(r) = a.replicas {
                cfg.replicas = r;
            }
            if let Some(h) = a.horizon {
                clamp_to_horizon(&mut cfg, h);
            }
            "simulate"
        }
        Command::Clt(a) => {
            if let Some(n) = a.n {
                cfg.n = n;
            }
            if let Some(r) = a.replicas {
                cfg.replicas = r;
            }
            if let Some(s) = a.s_steps {
                cfg.clt.s_steps = s;
            }
            if let Some(t) = a.t {
                cfg.clt.t = t;
                cfg.horizon = cfg.horizon.max(t);
            }
            if let Some(tf) = &a.test_function {
                cfg.clt.test_function =
                    TestFunctionId::parse(tf).map_err(|e| CliError::Validation(vec![e]))?;
            }
            "clt"
        }
        Command::Ldp(a) => {
            if let Some(p) = &a.path_csv {
                cfg.ldp.path_csv = p.to_string_lossy().into_owned();
            }
            if let Some(p) = &a.dpsi_csv {
                cfg.ldp.dpsi_csv = p.to_string_lossy().into_owned();
            }
            if let Some(family) = &a.trial_family {
                cfg.ldp.trial_family = family
                    .split(',')
                    .map(|s| TrialFieldId::parse(s.trim()))
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::Validation(vec![e]))?;
            }
            "ldp"
        }
        Command::Martingale(a) => {
            if let Some(n) = a.martingale_n {
                cfg.martingale.n = n;
            }
            if let Some(r) = a.martingale_replicas {
                cfg.martingale.replicas = r;
            }
            if let Some(h) = a.horizon {
                clamp_to_horizon(&mut cfg, h);
            }
            "martingale"
        }
        Command::Acceptance => "acceptance",
    };
    Ok((name.to_string(), cfg))
}

/// Translate the compact kernel grammar into the structured config form so
/// the resolved snapshot stays self-describing.
fn kernel_spec_from_grammar(spec: &str) -> Result<KernelSpec, CliError> {
    let err = |msg: String| CliError::Validation(vec![msg]);
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| err(format!("malformed kernel spec `{spec}`")))?;
    match kind {
        "constant" => {
            let value: f64 = rest
                .trim()
                .parse()
                .map_err(|_| err(format!("bad constant `{rest}`")))?;
            Ok(KernelSpec::Constant { value })
        }
        "table" => Ok(KernelSpec::Table {
            path: rest.trim().to_string(),
        }),
        "product" => {
            let idx = rest
                .find("),")
                .ok_or_else(|| err(format!("product spec `{rest}` needs two marginals")))?;
            let (first, second) = rest.split_at(idx + 1);
            let second = second.trim_start_matches(',');
            let parse_expr = |s: &str| -> Result<nurn_cli::config::ExprSpec, CliError> {
                let m = nurn_core::MarginalFn::parse(s).map_err(|e| err(e.to_string()))?;
                Ok(match m {
                    nurn_core::MarginalFn::Constant(value) => {
                        nurn_cli::config::ExprSpec::Constant { value }
                    }
                    nurn_core::MarginalFn::Affine { a, b } => {
                        nurn_cli::config::ExprSpec::Affine { a, b }
                    }
                    nurn_core::MarginalFn::Sinusoid { a, b } => {
                        nurn_cli::config::ExprSpec::Sinusoid { a, b }
                    }
                })
            };
            Ok(KernelSpec::Product {
                lambda1: parse_expr(first)?,
                lambda2: parse_expr(second)?,
            })
        }
        other => Err(err(format!("unknown kernel type `{other}`"))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, cfg) = match resolve_config(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run_command(&command, &cfg, &cli.out_dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
