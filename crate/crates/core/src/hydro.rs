//! Deterministic solvers for the macroscopic density equation, the test
//! function semigroup, and the exact single-ball mean structure.
//!
//! The density of the limiting measure solves
//!     dρ(t,x)/dt = ∫ λ(y,x) ρ(t,y) dy − ρ(t,x) ∫ λ(x,y) dy,
//! discretized with the shared grid quadrature. Two independent routes are
//! provided: fixed-step RK4 on the semi-discrete system, and the matrix
//! exponential of the same generator. Each certifies the other.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::grid::{GridSpec, TestFunction};
use crate::kernel::{DiscreteKernel, RateKernel};

/// Density sampled on a time × space lattice.
#[derive(Debug, Clone)]
pub struct DensityField {
    pub grid: GridSpec,
    pub times: Vec<f64>,
    /// Row k holds ρ(times[k], ·) at the grid nodes.
    pub values: Array2<f64>,
}

impl DensityField {
    pub fn snapshot(&self, k: usize) -> TestFunction {
        TestFunction {
            grid: self.grid,
            values: self.values.row(k).to_vec(),
        }
    }

    pub fn final_snapshot(&self) -> TestFunction {
        self.snapshot(self.times.len() - 1)
    }

    /// Largest drift of the quadrature of ρ(t,·) from its initial value.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self
            .grid
            .quad_unchecked(self.values.row(0).as_slice().unwrap());
        self.values
            .rows()
            .into_iter()
            .map(|r| (self.grid.quad_unchecked(r.as_slice().unwrap()) - m0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Right-hand side of the semi-discrete density equation.
///
/// Product kernels use the factorized O(m) form; table kernels apply the
/// dense generator row by row.
enum DensityOp {
    Product {
        l1: Vec<f64>,
        l2: Vec<f64>,
        /// loss coefficient λ1(x_j)·quad(λ2)
        q: Vec<f64>,
        weight: f64,
    },
    Dense(Array2<f64>),
}

impl DensityOp {
    fn new(k: &RateKernel, grid: GridSpec) -> Result<Self> {
        match k.marginals() {
            Some((m1, m2)) => {
                let l1 = m1.sample(grid);
                let l2 = m2.sample(grid);
                if l1.iter().any(|v| !(*v > 0.0)) || l2.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::domain(
                        "product kernel marginal is not strictly positive on the grid",
                    ));
                }
                let q2 = grid.quad_unchecked(&l2);
                let q = l1.iter().map(|v| v * q2).collect();
                Ok(DensityOp::Product {
                    l1,
                    l2,
                    q,
                    weight: grid.weight(),
                })
            }
            None => Ok(DensityOp::Dense(density_generator(k, grid)?)),
        }
    }

    fn apply(&self, rho: &[f64], out: &mut [f64]) {
        match self {
            DensityOp::Product { l1, l2, q, weight } => {
                let gain: f64 = l1.iter().zip(rho).map(|(a, r)| a * r).sum::<f64>() * weight;
                for j in 0..rho.len() {
                    out[j] = l2[j] * gain - rho[j] * q[j];
                }
            }
            DensityOp::Dense(mat) => {
                let r = ndarray::aview1(rho);
                for (j, row) in mat.rows().into_iter().enumerate() {
                    out[j] = row.dot(&r);
                }
            }
        }
    }
}

/// Generator of the density flow: entry (j, j') = λ(x_{j'}, x_j)/m, minus the
/// total outflow rate on the diagonal.
pub fn density_generator(k: &RateKernel, grid: GridSpec) -> Result<Array2<f64>> {
    let m = grid.len();
    let w = grid.weight();
    let mut a = Array2::<f64>::zeros((m, m));
    for j in 0..m {
        for jp in 0..m {
            a[[j, jp]] = w * k.eval(grid.node(jp), grid.node(j))?;
        }
    }
    for j in 0..m {
        let q: f64 = (0..m)
            .map(|jp| w * k.eval(grid.node(j), grid.node(jp)).unwrap())
            .sum();
        a[[j, j]] -= q;
    }
    Ok(a)
}

/// Generator of the test-function semigroup: entry (j, j') = λ(x_j, x_{j'})/m,
/// minus the row intensity on the diagonal. This is the transpose structure of
/// the density generator.
pub fn semigroup_generator(k: &RateKernel, grid: GridSpec) -> Result<Array2<f64>> {
    let m = grid.len();
    let w = grid.weight();
    let mut a = Array2::<f64>::zeros((m, m));
    for j in 0..m {
        for jp in 0..m {
            a[[j, jp]] = w * k.eval(grid.node(j), grid.node(jp))?;
        }
    }
    for j in 0..m {
        let q: f64 = (0..m).map(|jp| a[[j, jp]]).sum();
        a[[j, j]] -= q;
    }
    Ok(a)
}

/// RK4 integration of the semi-discrete density equation with fixed step dt
/// (last step truncated when dt does not divide the horizon). Snapshots are
/// recorded at every step.
pub fn solve_density(
    phi: &TestFunction,
    k: &RateKernel,
    dt: f64,
    horizon: f64,
) -> Result<DensityField> {
    if phi.values.iter().any(|v| *v < 0.0) {
        return Err(Error::domain("negative initial density"));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt = {dt} must be > 0")));
    }
    if horizon < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "horizon = {horizon} must be >= 0"
        )));
    }
    let grid = phi.grid;
    let op = DensityOp::new(k, grid)?;
    let m = grid.len();

    let mut rho = phi.values.clone();
    let mut times = vec![0.0];
    let mut rows = vec![rho.clone()];

    let mut k1 = vec![0.0; m];
    let mut k2 = vec![0.0; m];
    let mut k3 = vec![0.0; m];
    let mut k4 = vec![0.0; m];
    let mut stage = vec![0.0; m];

    let mut step: u64 = 0;
    loop {
        let t = step as f64 * dt;
        if t >= horizon - 1e-15 * horizon.max(1.0) {
            break;
        }
        let h = dt.min(horizon - t);

        op.apply(&rho, &mut k1);
        for j in 0..m {
            stage[j] = rho[j] + 0.5 * h * k1[j];
        }
        op.apply(&stage, &mut k2);
        for j in 0..m {
            stage[j] = rho[j] + 0.5 * h * k2[j];
        }
        op.apply(&stage, &mut k3);
        for j in 0..m {
            stage[j] = rho[j] + h * k3[j];
        }
        op.apply(&stage, &mut k4);
        for j in 0..m {
            rho[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }

        step += 1;
        let t_next = if h < dt { horizon } else { step as f64 * dt };
        times.push(t_next.min(horizon));
        rows.push(rho.clone());
        if h < dt {
            break;
        }
    }

    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((times.len(), m), flat).expect("row shape");
    Ok(DensityField {
        grid,
        times,
        values,
    })
}

/// Density at time t via the matrix exponential of the density generator —
/// the independent cross-check oracle for [`solve_density`].
pub fn density_expm(phi: &TestFunction, k: &RateKernel, t: f64) -> Result<TestFunction> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("t = {t} must be >= 0")));
    }
    if phi.values.iter().any(|v| *v < 0.0) {
        return Err(Error::domain("negative initial density"));
    }
    let gen = density_generator(k, phi.grid)?;
    let prop = expm(&(&gen * t));
    let out = prop.dot(&Array1::from_vec(phi.values.clone()));
    TestFunction::new(phi.grid, out.to_vec())
}

/// e^{t(P1−P2)} H on the grid.
pub fn semigroup_apply(h: &TestFunction, k: &RateKernel, t: f64) -> Result<TestFunction> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("t = {t} must be >= 0")));
    }
    let prop = semigroup_propagator(k, h.grid, t)?;
    let out = prop.dot(&Array1::from_vec(h.values.clone()));
    TestFunction::new(h.grid, out.to_vec())
}

/// Dense propagator e^{t(P1−P2)} for repeated application.
pub fn semigroup_propagator(k: &RateKernel, grid: GridSpec, t: f64) -> Result<Array2<f64>> {
    let gen = semigroup_generator(k, grid)?;
    Ok(expm(&(&gen * t)))
}

/// Single-ball transition probabilities p_{ij}(t) = exp(tQ), where Q is the
/// ball's jump generator with self-jumps removed (they do not change the law).
pub fn transition_matrix(dk: &DiscreteKernel, t: f64) -> Result<Array2<f64>> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("t = {t} must be >= 0")));
    }
    let n = dk.n;
    let nf = n as f64;
    let mut q = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let mut out_rate = 0.0;
        for j in 0..n {
            if i != j {
                let r = dk.rates[[i, j]] / nf;
                q[[i, j]] = r;
                out_rate += r;
            }
        }
        q[[i, i]] = -out_rate;
    }
    Ok(expm(&q.mapv_into(|v| v * t)))
}

/// Exact mean occupation E X_t(i) = Σ_k φ(k/n) p_{ki}(t) under Poisson(φ)
/// initial data; the centering used by the fluctuation field.
pub fn mean_counts(phi: &[f64], dk: &DiscreteKernel, t: f64) -> Result<Vec<f64>> {
    if phi.len() != dk.n {
        return Err(Error::shape(format!(
            "mean profile of length {} for {} boxes",
            phi.len(),
            dk.n
        )));
    }
    let p = transition_matrix(dk, t)?;
    let v = Array1::from_vec(phi.to_vec());
    Ok(v.dot(&p).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::MarginalFn;

    fn grid(m: usize) -> GridSpec {
        GridSpec::new(m).unwrap()
    }

    /// Closed form for λ ≡ 1: the node average is conserved, deviations decay
    /// at unit rate; exact for the semi-discrete system.
    fn uniform_closed_form(phi: &TestFunction, t: f64) -> TestFunction {
        let mbar = phi.quadrature();
        TestFunction {
            grid: phi.grid,
            values: phi
                .values
                .iter()
                .map(|v| mbar + (v - mbar) * (-t).exp())
                .collect(),
        }
    }

    #[test]
    fn solve_density_uniform_kernel_matches_closed_form() {
        let g = grid(200);
        let k = RateKernel::constant(1.0).unwrap();
        let phi = TestFunction::from_fn(g, |x| 1.0 + (x - 0.5));
        let field = solve_density(&phi, &k, 1e-3, 1.0).unwrap();
        let expect = uniform_closed_form(&phi, 1.0);
        let err = field.final_snapshot().sup_distance(&expect);
        assert!(err <= 1e-6, "sup error {err}");
    }

    #[test]
    fn solve_density_constant_profile_is_stationary() {
        let g = grid(50);
        let k = RateKernel::constant(1.0).unwrap();
        let phi = TestFunction::constant(g, 0.7);
        let field = solve_density(&phi, &k, 1e-3, 1.0).unwrap();
        let err = field.final_snapshot().sup_distance(&phi);
        assert!(err <= 1e-12, "drifted off the fixed point by {err}");
    }

    #[test]
    fn solve_density_product_stationary_profile() {
        // gain λ2(x)·quad(λ1·φ) = quad(c) = c equals loss φ(x)λ1(x)·quad(λ2) = c
        let g = grid(100);
        let k = RateKernel::product(
            MarginalFn::Affine { a: 1.0, b: 1.0 },
            MarginalFn::Constant(1.0),
        );
        let c = 0.8;
        let phi = TestFunction::from_fn(g, |x| c / (1.0 + x));
        let field = solve_density(&phi, &k, 1e-3, 1.0).unwrap();
        let err = field.final_snapshot().sup_distance(&phi);
        assert!(err <= 1e-6, "sup drift {err}");
    }

    #[test]
    fn solve_density_rejects_negative_initial_data() {
        let g = grid(10);
        let k = RateKernel::constant(1.0).unwrap();
        let phi = TestFunction::new(g, vec![-0.1; 10]).unwrap();
        assert!(matches!(
            solve_density(&phi, &k, 1e-2, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn solve_density_truncates_last_step() {
        let g = grid(10);
        let k = RateKernel::constant(1.0).unwrap();
        let phi = TestFunction::constant(g, 1.0);
        let field = solve_density(&phi, &k, 0.3, 1.0).unwrap();
        assert_eq!(field.times.len(), 5); // 0, .3, .6, .9, 1.0
        assert!((field.times.last().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn solve_density_conserves_mass_and_positivity() {
        let g = grid(100);
        let k = RateKernel::product(
            MarginalFn::Affine { a: 1.0, b: 1.0 },
            MarginalFn::Affine { a: 2.0, b: -1.0 },
        );
        let phi = TestFunction::from_fn(g, |x| 1.0 + 0.5 * x);
        let field = solve_density(&phi, &k, 1e-3, 1.0).unwrap();
        assert!(
            field.mass_drift() <= 1e-8,
            "mass drift {}",
            field.mass_drift()
        );
        assert!(
            field.min_value() >= -1e-10,
            "negative density {}",
            field.min_value()
        );
    }

    #[test]
    fn density_expm_at_zero_is_identity() {
        let g = grid(25);
        let k = RateKernel::constant(2.0).unwrap();
        let phi = TestFunction::from_fn(g, |x| 1.0 + x * x);
        let out = density_expm(&phi, &k, 0.0).unwrap();
        assert_eq!(out.values, phi.values);
    }

    #[test]
    fn density_expm_uniform_kernel_closed_form() {
        let g = grid(200);
        let k = RateKernel::constant(1.0).unwrap();
        let phi = TestFunction::from_fn(g, |x| 1.0 + (x - 0.5));
        let out = density_expm(&phi, &k, 1.0).unwrap();
        let expect = uniform_closed_form(&phi, 1.0);
        let err = out.sup_distance(&expect);
        assert!(err <= 1e-8, "sup error {err}");
    }

    #[test]
    fn density_expm_conserves_quadrature() {
        let g = grid(60);
        let k = RateKernel::product(
            MarginalFn::Sinusoid { a: 1.5, b: 0.4 },
            MarginalFn::Affine { a: 2.0, b: -1.0 },
        );
        let phi = TestFunction::from_fn(g, |x| 1.0 + 0.3 * (6.0 * x).cos().abs());
        let out = density_expm(&phi, &k, 0.8).unwrap();
        assert!((out.quadrature() - phi.quadrature()).abs() <= 1e-10);
    }

    #[test]
    fn rk4_and_expm_agree() {
        let g = grid(80);
        for k in [
            RateKernel::constant(1.0).unwrap(),
            RateKernel::product(
                MarginalFn::Affine { a: 1.0, b: 1.0 },
                MarginalFn::Affine { a: 2.0, b: -1.0 },
            ),
        ] {
            let phi = TestFunction::from_fn(g, |x| 1.0 + 0.5 * x);
            for t in [0.25, 0.5, 1.0] {
                let rk = solve_density(&phi, &k, 1e-3, t).unwrap().final_snapshot();
                let ex = density_expm(&phi, &k, t).unwrap();
                let err = rk.sup_distance(&ex);
                assert!(err <= 1e-6, "kernel {k} t {t}: sup {err}");
            }
        }
    }

    #[test]
    fn semigroup_at_zero_returns_input_exactly() {
        let g = grid(30);
        let k = RateKernel::constant(1.0).unwrap();
        let h = TestFunction::from_fn(g, |x| x.sin());
        let out = semigroup_apply(&h, &k, 0.0).unwrap();
        assert_eq!(out.values, h.values);
    }

    #[test]
    fn semigroup_fixes_constants() {
        let g = grid(40);
        let k = RateKernel::product(
            MarginalFn::Affine { a: 1.0, b: 1.0 },
            MarginalFn::Sinusoid { a: 2.0, b: 0.5 },
        );
        let h = TestFunction::constant(g, 1.0);
        let out = semigroup_apply(&h, &k, 0.7).unwrap();
        let err = out.sup_distance(&h);
        assert!(err <= 1e-13, "constants moved by {err}");
    }

    #[test]
    fn semigroup_uniform_kernel_closed_form() {
        let g = grid(200);
        let k = RateKernel::constant(1.0).unwrap();
        let h = TestFunction::from_fn(g, |x| x);
        let out = semigroup_apply(&h, &k, 1.0).unwrap();
        let hbar = h.quadrature();
        let expect = TestFunction {
            grid: g,
            values: h
                .values
                .iter()
                .map(|v| hbar + (-1f64).exp() * (v - hbar))
                .collect(),
        };
        let err = out.sup_distance(&expect);
        assert!(err <= 1e-8, "sup error {err}");
    }

    #[test]
    fn semigroup_composes() {
        let g = grid(50);
        let k = RateKernel::product(
            MarginalFn::Affine { a: 1.0, b: 0.5 },
            MarginalFn::Affine { a: 1.5, b: -0.5 },
        );
        let h = TestFunction::from_fn(g, |x| (2.0 * x - 1.0).powi(3));
        let u = semigroup_apply(&h, &k, 0.3 + 0.9).unwrap();
        let v = semigroup_apply(&semigroup_apply(&h, &k, 0.9).unwrap(), &k, 0.3).unwrap();
        let err = u.sup_distance(&v);
        assert!(err <= 1e-8, "semigroup property violated by {err}");
    }

    #[test]
    fn transition_matrix_at_zero_is_identity() {
        let dk = RateKernel::constant(1.0).unwrap().discretize(6).unwrap();
        let p = transition_matrix(&dk, 0.0).unwrap();
        assert_eq!(p, Array2::<f64>::eye(6));
    }

    #[test]
    fn transition_matrix_uniform_kernel_closed_form() {
        let n = 7;
        let dk = RateKernel::constant(1.0).unwrap().discretize(n).unwrap();
        let t = 0.8;
        let p = transition_matrix(&dk, t).unwrap();
        let off = (1.0 - (-t).exp()) / n as f64;
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { (-t).exp() + off } else { off };
                assert!(
                    (p[[i, j]] - expect).abs() <= 1e-10,
                    "entry ({i},{j}) = {} vs {expect}",
                    p[[i, j]]
                );
            }
        }
    }

    #[test]
    fn mean_counts_at_zero_is_initial_profile() {
        let dk = RateKernel::constant(1.0).unwrap().discretize(5).unwrap();
        let phi = vec![0.5, 1.0, 1.5, 2.0, 2.5];
        assert_eq!(mean_counts(&phi, &dk, 0.0).unwrap(), phi);
    }

    #[test]
    fn mean_counts_uniform_kernel_closed_form_and_mass() {
        let n = 12;
        let dk = RateKernel::constant(1.0).unwrap().discretize(n).unwrap();
        let phi: Vec<f64> = (1..=n).map(|i| 1.0 + 0.5 * i as f64 / n as f64).collect();
        let mbar = phi.iter().sum::<f64>() / n as f64;
        let t = 0.6;
        let m = mean_counts(&phi, &dk, t).unwrap();
        for i in 0..n {
            let expect = mbar + (phi[i] - mbar) * (-t).exp();
            assert!((m[i] - expect).abs() <= 1e-10);
        }
        let total: f64 = m.iter().sum();
        let total0: f64 = phi.iter().sum();
        assert!((total - total0).abs() <= 1e-10);
    }

    #[test]
    fn transition_matrix_rows_are_stochastic_for_random_product_kernels() {
        use proptest::prelude::*;
        use proptest::test_runner::TestRunner;
        let mut runner = TestRunner::default();
        runner
            .run(
                &(
                    0.1f64..3.0,
                    0.0f64..2.0,
                    0.1f64..3.0,
                    0.0f64..2.0,
                    0.1f64..2.0,
                ),
                |(a1, b1, a2, b2, t)| {
                    let k = RateKernel::product(
                        MarginalFn::Affine { a: a1, b: b1 },
                        MarginalFn::Affine { a: a2, b: b2 },
                    );
                    let dk = k.discretize(9).unwrap();
                    let p = transition_matrix(&dk, t).unwrap();
                    for i in 0..9 {
                        let row_sum: f64 = p.row(i).sum();
                        prop_assert!((row_sum - 1.0).abs() <= 1e-12, "row {i} sums to {row_sum}");
                        prop_assert!(p.row(i).iter().all(|v| *v >= -1e-14));
                    }
                    Ok(())
                },
            )
            .unwrap();
    }

    #[test]
    fn grid_refinement_converges() {
        let k = RateKernel::product(
            MarginalFn::Affine { a: 1.0, b: 1.0 },
            MarginalFn::Affine { a: 2.0, b: -1.0 },
        );
        // Compare each solution with the one at double resolution on the
        // shared nodes j/m = (2j)/(2m).
        let sup_diff = |m: usize| -> f64 {
            let gc = grid(m);
            let gf = grid(2 * m);
            let pc = TestFunction::from_fn(gc, |x| 1.0 + 0.5 * x);
            let pf = TestFunction::from_fn(gf, |x| 1.0 + 0.5 * x);
            let coarse = solve_density(&pc, &k, 1e-3, 0.5).unwrap().final_snapshot();
            let fine = solve_density(&pf, &k, 1e-3, 0.5).unwrap().final_snapshot();
            (0..m)
                .map(|j| (coarse.values[j] - fine.values[2 * j + 1]).abs())
                .fold(0.0, f64::max)
        };
        let d50 = sup_diff(50);
        let d100 = sup_diff(100);
        assert!(d100 < d50, "no refinement: {d50} -> {d100}");
    }
}
