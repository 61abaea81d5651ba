//! Monte Carlo validation of the simulator against the exact Poisson
//! structure of the model: evolved means, Fano factors, vanishing
//! cross-covariances, the CLT variance, and the unit-mean martingale.
//! All ensembles run on fixed seeds, so every band check is deterministic.

use nurn_core::fluct::{clt_check, sample_fluctuation_ensemble, theta_sq};
use nurn_core::hydro::mean_counts;
use nurn_core::ldp::{martingale_mean, ControlField};
use nurn_core::seed::replica_rng;
use nurn_core::sim::{sample_initial, SimConfig, Simulator};
use nurn_core::stats;
use nurn_core::{GridSpec, MarginalFn, RateKernel, TestFunction};

fn product_kernel() -> RateKernel {
    RateKernel::product(
        MarginalFn::Affine { a: 1.0, b: 1.0 },
        MarginalFn::Affine { a: 2.0, b: -1.0 },
    )
}

/// Per-box ensembles of X_t(i) for a fixed kernel and Poisson(φ) data.
fn box_ensemble(
    k: &RateKernel,
    phi: &[f64],
    n: usize,
    t: f64,
    replicas: u64,
    seed: u64,
) -> Vec<Vec<f64>> {
    let dk = k.discretize(n).unwrap();
    let sim = Simulator::new(&dk);
    let mut per_box = vec![Vec::with_capacity(replicas as usize); n];
    for r in 0..replicas {
        let mut rng = replica_rng(seed, r);
        let x0 = sample_initial(phi, n, &mut rng).unwrap();
        let traj = sim.simulate(&x0, &[t], &mut rng).unwrap();
        for (i, &c) in traj.counts_at(0).counts.iter().enumerate() {
            per_box[i].push(c as f64);
        }
    }
    per_box
}

#[test]
fn occupations_stay_poisson_with_evolved_means() {
    // With Poisson(φ) data and independent ball motion, X_t(i) is Poisson
    // with mean Σ_k φ(k/n) p_ki(t): the sample mean must match the
    // transition-matrix mean and the Fano factor must stay at 1.
    let n = 20;
    let t = 0.5;
    let replicas = 3000u64;
    let k = product_kernel();
    let phi: Vec<f64> = (1..=n).map(|i| 1.0 + i as f64 / n as f64).collect();
    let dk = k.discretize(n).unwrap();
    let exact = mean_counts(&phi, &dk, t).unwrap();

    let per_box = box_ensemble(&k, &phi, n, t, replicas, 2718);
    let fano_band = 3.3 * (2.0 / replicas as f64).sqrt();
    for &i in &[0usize, 9, 19] {
        let mean = stats::mean(&per_box[i]);
        let mean_band = 3.3 * (exact[i] / replicas as f64).sqrt();
        assert!(
            (mean - exact[i]).abs() <= mean_band,
            "box {i}: mean {mean} vs exact {} (band {mean_band})",
            exact[i]
        );
        let fano = stats::variance(&per_box[i]).unwrap() / mean;
        assert!(
            (fano - 1.0).abs() <= fano_band,
            "box {i}: Fano {fano} (band {fano_band})"
        );
    }
}

#[test]
fn cross_covariances_vanish() {
    // The off-diagonal covariance of (X_t(i), X_t(j)) cancels exactly for
    // Poisson initial data; the empirical covariance must sit in a 3.3σ
    // band around zero.
    let n = 10;
    let t = 0.5;
    let replicas = 4000u64;
    let k = product_kernel();
    let phi = vec![2.0; n];
    let dk = k.discretize(n).unwrap();
    let exact = mean_counts(&phi, &dk, t).unwrap();

    let per_box = box_ensemble(&k, &phi, n, t, replicas, 424242);
    for &(i, j) in &[(0usize, 5usize), (2, 7), (3, 9)] {
        let cov = stats::covariance(&per_box[i], &per_box[j]).unwrap();
        let band = 3.3 * (exact[i] * exact[j] / (replicas as f64 - 1.0)).sqrt();
        assert!(
            cov.abs() <= band,
            "pair ({i},{j}): covariance {cov} outside ±{band}"
        );
    }
}

#[test]
fn total_mass_fluctuation_is_frozen_in_time() {
    // V_t(1) = (total mass − its mean)/√n is literally the same number at
    // every time by conservation, and its variance is quadrature(φ).
    let n = 100;
    let c = 1.5;
    let k = RateKernel::constant(1.0).unwrap();
    let phi = vec![c; n];
    let ones = vec![1.0; n];
    let cfg = SimConfig {
        n,
        horizon: 1.0,
        sample_times: vec![0.25, 1.0],
        seed: 99,
        replicas: 2000,
    };
    let ens = sample_fluctuation_ensemble(&[0.25, 1.0], &[ones], &phi, &cfg, &k).unwrap();
    // Identical up to the rounding of the exact-mean centering at the two
    // times (the counts themselves are bitwise conserved).
    let worst = ens.samples[0][0]
        .iter()
        .zip(&ens.samples[1][0])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-10, "frozen series drifted by {worst}");

    let report = clt_check(&ens.samples[0][0], c).unwrap();
    assert!(
        report.z_score.abs() <= 3.3,
        "total-mass variance z = {}",
        report.z_score
    );
}

#[test]
fn clt_variance_matches_the_formula() {
    // Desk-scale variance matching: the empirical variance of
    // V_1(x) over 3000 replicas agrees with θ²(1, x) within 3.3 standard
    // errors of the variance estimator.
    let n = 100;
    let k = RateKernel::constant(1.0).unwrap();
    let grid = GridSpec::new(n).unwrap();
    let h = TestFunction::from_fn(grid, |x| x);
    let phi = TestFunction::constant(grid, 1.0);
    let t = 1.0;

    let formula = theta_sq(t, &h, &phi, &k, 100).unwrap();

    let cfg = SimConfig {
        n,
        horizon: t,
        sample_times: vec![t],
        seed: 20240,
        replicas: 3000,
    };
    let samples =
        nurn_core::fluct::sample_fluctuation(t, &h.values, &phi.values, &cfg, &k).unwrap();
    let report = clt_check(&samples, formula).unwrap();
    assert!(
        report.z_score.abs() <= 3.3,
        "z = {} (formula {}, empirical {})",
        report.z_score,
        report.theta_sq_formula,
        report.theta_sq_empirical
    );
}

#[test]
fn exponential_martingale_has_unit_mean() {
    let n = 5;
    let t = 0.3;
    let k = RateKernel::constant(1.0).unwrap();
    let phi = vec![1.0; n];
    let grid = GridSpec::new(n).unwrap();
    let g = ControlField::time_constant(grid, grid.nodes().map(|x| 0.15 * x).collect()).unwrap();
    let est = martingale_mean(&k, &phi, n, &g, t, 8088, 20_000).unwrap();
    assert!(
        (est.mean - 1.0).abs() <= 3.3 * est.standard_error,
        "mean {} ± {}",
        est.mean,
        est.standard_error
    );
}
