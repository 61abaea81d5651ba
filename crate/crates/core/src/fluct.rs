//! The limiting Gaussian variance θ²(t, H) of the fluctuation field and its
//! Monte Carlo validation.
//!
//! θ²(t,H) = ∫ (e^{t(P1−P2)}H)²(x) φ(x) dx
//!         + ∫_0^t ‖b_s(e^{(t−s)(P1−P2)}H)‖₂² ds,
//! with ‖b_s(f)‖₂² = ∬ ρ(s,x) λ(x,y) (f(x) − f(y))² dx dy. The time integral
//! uses the composite trapezoid rule; the semigroup factors are produced by
//! one backward sweep with the one-step propagator, so each refinement level
//! costs a single dense exponential.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TestFunction;
use crate::hydro::{mean_counts, semigroup_apply, semigroup_propagator, solve_density};
use crate::kernel::RateKernel;
use crate::seed::replica_rng;
use crate::sim::{sample_initial, SimConfig, Simulator};
use crate::stats;

/// Fixed-step hint for the density solve feeding the time integral.
const RHO_DT_HINT: f64 = 1e-3;

/// Comparison of the formula variance against an ensemble estimate.
#[derive(Debug, Clone, Copy)]
pub struct VarianceReport {
    pub theta_sq_formula: f64,
    pub theta_sq_empirical: f64,
    pub replicas: usize,
    pub standard_error: f64,
    pub z_score: f64,
}

/// ∬ ρ(x) λ(x,y) (f(x) − f(y))² dx dy on the shared grid.
///
/// The plain double sum is kept (no factorization) so that constant f and
/// vanishing ρ give exact zeros term by term.
pub fn b_norm_sq(f: &TestFunction, rho: &TestFunction, k: &RateKernel) -> Result<f64> {
    if f.grid != rho.grid {
        return Err(Error::shape("f and rho sampled on different grids"));
    }
    if rho.values.iter().any(|v| *v < 0.0) {
        return Err(Error::domain("negative density in b-norm"));
    }
    let grid = f.grid;
    let m = grid.len();
    let w = grid.weight();
    // Product kernels factor into marginal samples; tables are evaluated
    // pairwise at the nodes.
    let (l1, l2): (Vec<f64>, Vec<f64>) = match k.marginals() {
        Some((m1, m2)) => (m1.sample(grid), m2.sample(grid)),
        None => (Vec::new(), Vec::new()),
    };
    let mut total = 0.0;
    for i in 0..m {
        if rho.values[i] == 0.0 {
            continue;
        }
        let fi = f.values[i];
        let mut row = 0.0;
        for j in 0..m {
            let d = fi - f.values[j];
            if d == 0.0 {
                continue;
            }
            let lam = if l1.is_empty() {
                k.eval(grid.node(i), grid.node(j))?
            } else {
                l1[i] * l2[j]
            };
            row += lam * d * d;
        }
        total += rho.values[i] * row;
    }
    Ok(total * w * w)
}

/// θ²(t, H) under initial profile φ, with `s_steps` trapezoid panels for the
/// time integral.
pub fn theta_sq(
    t: f64,
    h: &TestFunction,
    phi: &TestFunction,
    k: &RateKernel,
    s_steps: usize,
) -> Result<f64> {
    if h.grid != phi.grid {
        return Err(Error::shape("H and phi sampled on different grids"));
    }
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("t = {t} must be >= 0")));
    }
    if s_steps == 0 {
        return Err(Error::InvalidArgument("s_steps must be >= 1".into()));
    }
    let grid = h.grid;

    let evolved = semigroup_apply(h, k, t)?;
    let sq_phi: Vec<f64> = evolved
        .values
        .iter()
        .zip(&phi.values)
        .map(|(u, p)| u * u * p)
        .collect();
    let term1 = grid.quadrature(&sq_phi)?;

    if t == 0.0 {
        return Ok(term1);
    }

    let delta = t / s_steps as f64;

    // Backward sweep: u_k = e^{(t - s_k)(P1-P2)} H via repeated application
    // of the one-step propagator, starting from u_{s_steps} = H.
    let step_prop = semigroup_propagator(k, grid, delta)?;
    let mut sweep: Vec<TestFunction> = vec![h.clone(); s_steps + 1];
    for kk in (0..s_steps).rev() {
        let next = ndarray::Array1::from_vec(sweep[kk + 1].values.clone());
        sweep[kk] = TestFunction {
            grid,
            values: step_prop.dot(&next).to_vec(),
        };
    }

    // Density at the trapezoid nodes, refined internally so the RK4 error is
    // negligible against the quadrature error being measured.
    let inner = (delta / RHO_DT_HINT).ceil().max(1.0) as usize;
    let field = solve_density(phi, k, delta / inner as f64, t)?;

    let mut integral = 0.0;
    for (kk, u) in sweep.iter().enumerate() {
        let rho = field.snapshot(kk * inner);
        let g = b_norm_sq(u, &rho, k)?;
        let weight = if kk == 0 || kk == s_steps { 0.5 } else { 1.0 };
        integral += weight * g;
    }
    Ok(term1 + integral * delta)
}

/// θ(t, H) = sqrt of [`theta_sq`].
pub fn theta(
    t: f64,
    h: &TestFunction,
    phi: &TestFunction,
    k: &RateKernel,
    s_steps: usize,
) -> Result<f64> {
    Ok(theta_sq(t, h, phi, k, s_steps)?.sqrt())
}

/// Samples of several scalar fluctuation projections from one ensemble.
///
/// `samples[time][h][replica]` holds
///   (1/√n)·Σ_i (X_t(i) − E X_t(i))·h(i/n),
/// centered with the exact transition-matrix mean, never an ensemble mean.
#[derive(Debug, Clone)]
pub struct FluctuationSamples {
    pub times: Vec<f64>,
    pub samples: Vec<Vec<Vec<f64>>>,
}

pub fn sample_fluctuation_ensemble(
    times: &[f64],
    hs: &[Vec<f64>],
    phi: &[f64],
    cfg: &SimConfig,
    k: &RateKernel,
) -> Result<FluctuationSamples> {
    cfg.validate()?;
    if times.iter().any(|t| *t > cfg.horizon || *t < 0.0) {
        return Err(Error::InvalidArgument(
            "fluctuation sample time outside [0, horizon]".into(),
        ));
    }
    if phi.len() != cfg.n {
        return Err(Error::shape(format!(
            "phi has {} nodes for n = {}",
            phi.len(),
            cfg.n
        )));
    }
    for h in hs {
        if h.len() != cfg.n {
            return Err(Error::shape(format!(
                "test function has {} nodes for n = {}",
                h.len(),
                cfg.n
            )));
        }
    }
    let dk = k.discretize(cfg.n)?;
    let means: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| mean_counts(phi, &dk, t))
        .collect::<Result<_>>()?;
    let sim = Simulator::new(&dk);
    let sqrt_n = (cfg.n as f64).sqrt();

    let per_replica: Vec<Vec<Vec<f64>>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<Vec<f64>>> {
            let mut rng = replica_rng(cfg.seed, r);
            let x0 = sample_initial(phi, cfg.n, &mut rng)?;
            let traj = sim.simulate(&x0, times, &mut rng)?;
            let mut vals = vec![vec![0.0; hs.len()]; times.len()];
            for (ti, (_, snap)) in traj.snapshots.iter().enumerate() {
                for (hi, h) in hs.iter().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..cfg.n {
                        acc += (snap.counts[i] as f64 - means[ti][i]) * h[i];
                    }
                    vals[ti][hi] = acc / sqrt_n;
                }
            }
            Ok(vals)
        })
        .collect::<Result<_>>()?;

    let mut samples = vec![vec![vec![0.0; cfg.replicas]; hs.len()]; times.len()];
    for (r, vals) in per_replica.iter().enumerate() {
        for ti in 0..times.len() {
            for hi in 0..hs.len() {
                samples[ti][hi][r] = vals[ti][hi];
            }
        }
    }
    Ok(FluctuationSamples {
        times: times.to_vec(),
        samples,
    })
}

/// Replica samples of V_t^N(H) for a single time and test function.
pub fn sample_fluctuation(
    t: f64,
    h: &[f64],
    phi: &[f64],
    cfg: &SimConfig,
    k: &RateKernel,
) -> Result<Vec<f64>> {
    let ens = sample_fluctuation_ensemble(&[t], &[h.to_vec()], phi, cfg, k)?;
    Ok(ens
        .samples
        .into_iter()
        .next()
        .unwrap()
        .into_iter()
        .next()
        .unwrap())
}

/// Empirical variance vs. the formula value, with the standard error of the
/// variance estimator from the fourth-moment formula.
pub fn clt_check(samples: &[f64], theta_sq: f64) -> Result<VarianceReport> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "clt check needs >= 2 samples, got {}",
            samples.len()
        )));
    }
    let emp = stats::variance(samples)?;
    let se = stats::variance_standard_error(samples)?;
    Ok(VarianceReport {
        theta_sq_formula: theta_sq,
        theta_sq_empirical: emp,
        replicas: samples.len(),
        standard_error: se,
        z_score: (emp - theta_sq) / se,
    })
}
