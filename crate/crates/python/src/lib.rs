//! Python bindings: kernels, the density solvers, the fluctuation variance,
//! the rate functionals, and the martingale estimator.
//!
//! Values cross the boundary as plain lists; the heavy lifting stays in the
//! core crate. Kernels are built from the same compact grammar the CLI uses:
//! `constant:<c>`, `product:<marginal>,<marginal>` (marginals `constant(a)`,
//! `affine(a,b)`, `sin(a,b)`) or `table:<csv path>`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use nurn_core::fluct;
use nurn_core::hydro;
use nurn_core::ldp;
use nurn_core::sim::SimConfig;
use nurn_core::{GridSpec, RateKernel, TestFunction};

fn err(e: nurn_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn grid(m: usize) -> PyResult<GridSpec> {
    GridSpec::new(m).map_err(err)
}

fn test_fn(m: usize, values: Vec<f64>) -> PyResult<TestFunction> {
    TestFunction::new(grid(m)?, values).map_err(err)
}

/// A rate kernel λ(x, y) on the unit square.
#[pyclass(name = "Kernel", from_py_object)]
#[derive(Clone)]
struct PyKernel {
    inner: RateKernel,
}

#[pymethods]
impl PyKernel {
    /// Parse a kernel spec, e.g. "product:affine(1,1),affine(2,-1)".
    #[staticmethod]
    fn parse(spec: &str) -> PyResult<Self> {
        Ok(PyKernel {
            inner: RateKernel::parse(spec).map_err(err)?,
        })
    }

    #[staticmethod]
    fn constant(value: f64) -> PyResult<Self> {
        Ok(PyKernel {
            inner: RateKernel::constant(value).map_err(err)?,
        })
    }

    fn eval(&self, x: f64, y: f64) -> PyResult<f64> {
        self.inner.eval(x, y).map_err(err)
    }

    fn is_product(&self) -> bool {
        self.inner.marginals().is_some()
    }

    fn __repr__(&self) -> String {
        format!("Kernel({})", self.inner)
    }
}

/// Grid nodes j/m for j = 1..m.
#[pyfunction]
fn grid_nodes(m: usize) -> PyResult<Vec<f64>> {
    Ok(grid(m)?.nodes().collect())
}

/// Right-endpoint quadrature (1/m)·Σ f(j/m).
#[pyfunction]
fn quadrature(values: Vec<f64>) -> PyResult<f64> {
    let g = grid(values.len())?;
    g.quadrature(&values).map_err(err)
}

/// Solve the density equation by RK4; returns (times, values[time][node]).
#[pyfunction]
#[pyo3(signature = (kernel, phi, dt, horizon))]
fn solve_density(
    kernel: &PyKernel,
    phi: Vec<f64>,
    dt: f64,
    horizon: f64,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = phi.len();
    let field = hydro::solve_density(&test_fn(m, phi)?, &kernel.inner, dt, horizon).map_err(err)?;
    let rows = field
        .values
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect();
    Ok((field.times, rows))
}

/// Density at time t via the matrix exponential (the solver oracle).
#[pyfunction]
fn density_expm(kernel: &PyKernel, phi: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
    let m = phi.len();
    Ok(hydro::density_expm(&test_fn(m, phi)?, &kernel.inner, t)
        .map_err(err)?
        .values)
}

/// e^{t(P1-P2)} H on the grid of H.
#[pyfunction]
fn semigroup_apply(kernel: &PyKernel, h: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
    let m = h.len();
    Ok(hydro::semigroup_apply(&test_fn(m, h)?, &kernel.inner, t)
        .map_err(err)?
        .values)
}

/// Exact per-box means E X_t(i) under Poisson(phi) initial data.
#[pyfunction]
fn mean_counts(kernel: &PyKernel, phi: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
    let n = phi.len();
    let dk = kernel.inner.discretize(n).map_err(err)?;
    hydro::mean_counts(&phi, &dk, t).map_err(err)
}

/// Limiting Gaussian variance θ²(t, H).
#[pyfunction]
#[pyo3(signature = (kernel, h, phi, t, s_steps = 100))]
fn theta_sq(
    kernel: &PyKernel,
    h: Vec<f64>,
    phi: Vec<f64>,
    t: f64,
    s_steps: usize,
) -> PyResult<f64> {
    let m = h.len();
    fluct::theta_sq(
        t,
        &test_fn(m, h)?,
        &test_fn(m, phi)?,
        &kernel.inner,
        s_steps,
    )
    .map_err(err)
}

/// Seeded ensemble of box counts; returns counts[replica][time][box].
#[pyfunction]
fn simulate_ensemble(
    kernel: &PyKernel,
    phi: Vec<f64>,
    sample_times: Vec<f64>,
    seed: u64,
    replicas: usize,
) -> PyResult<Vec<Vec<Vec<u64>>>> {
    let n = phi.len();
    let dk = kernel.inner.discretize(n).map_err(err)?;
    let sim = nurn_core::Simulator::new(&dk);
    let mut out = Vec::with_capacity(replicas);
    for r in 0..replicas {
        let mut rng = nurn_core::seed::replica_rng(seed, r as u64);
        let x0 = nurn_core::sim::sample_initial(&phi, n, &mut rng).map_err(err)?;
        let traj = sim.simulate(&x0, &sample_times, &mut rng).map_err(err)?;
        out.push(
            traj.snapshots
                .into_iter()
                .map(|(_, c)| c.counts)
                .collect::<Vec<_>>(),
        );
    }
    Ok(out)
}

/// Replica samples of the scalar fluctuation V_t(H), exactly centered.
#[pyfunction]
fn sample_fluctuation(
    kernel: &PyKernel,
    h: Vec<f64>,
    phi: Vec<f64>,
    t: f64,
    seed: u64,
    replicas: usize,
) -> PyResult<Vec<f64>> {
    let n = phi.len();
    let cfg = SimConfig {
        n,
        horizon: t,
        sample_times: vec![t],
        seed,
        replicas,
    };
    fluct::sample_fluctuation(t, &h, &phi, &cfg, &kernel.inner).map_err(err)
}

/// Empirical-vs-formula variance report as a dict-like tuple:
/// (theta_sq_formula, theta_sq_empirical, standard_error, z_score).
#[pyfunction]
fn clt_check(samples: Vec<f64>, theta_sq: f64) -> PyResult<(f64, f64, f64, f64)> {
    let r = fluct::clt_check(&samples, theta_sq).map_err(err)?;
    Ok((
        r.theta_sq_formula,
        r.theta_sq_empirical,
        r.standard_error,
        r.z_score,
    ))
}

/// Relative-entropy rate of an initial profile against Poisson(phi).
#[pyfunction]
fn rate_initial(psi0: Vec<f64>, phi: Vec<f64>) -> PyResult<f64> {
    let m = phi.len();
    ldp::rate_initial(&test_fn(m, psi0)?, &test_fn(m, phi)?).map_err(err)
}

/// Tilted density under a time-constant control field; returns
/// (times, values[time][node]).
#[pyfunction]
fn tilted_density(
    kernel: &PyKernel,
    gamma: Vec<f64>,
    g_values: Vec<f64>,
    dt: f64,
    horizon: f64,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = gamma.len();
    let g = grid(m)?;
    let field = ldp::ControlField::time_constant(g, g_values).map_err(err)?;
    let path = ldp::tilted_density(&test_fn(m, gamma)?, &field, &kernel.inner, dt, horizon)
        .map_err(err)?;
    let rows = path.values.rows().into_iter().map(|r| r.to_vec()).collect();
    Ok((path.times, rows))
}

/// Reconstruct the optimal control field of a sampled path (product kernels
/// only); returns (g_values[time][node], c_s, d0_violation).
#[pyfunction]
fn control_field(
    kernel: &PyKernel,
    times: Vec<f64>,
    psi: Vec<Vec<f64>>,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, f64)> {
    let m = psi.first().map(|r| r.len()).unwrap_or(0);
    let path = ldp::PathDensity::from_sampled_rows(grid(m)?, times, &psi).map_err(err)?;
    let built = ldp::control_field(&path, &kernel.inner).map_err(err)?;
    let rows = built
        .field
        .values
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect();
    Ok((rows, built.cs, built.d0_violation))
}

/// Dynamic rate ϑ of a sampled path under a time-constant field.
#[pyfunction]
fn rate_dynamic(
    kernel: &PyKernel,
    times: Vec<f64>,
    psi: Vec<Vec<f64>>,
    g_values: Vec<f64>,
) -> PyResult<f64> {
    let m = psi.first().map(|r| r.len()).unwrap_or(0);
    let g = grid(m)?;
    let path = ldp::PathDensity::from_sampled_rows(g, times, &psi).map_err(err)?;
    let field = ldp::ControlField::time_constant(g, g_values).map_err(err)?;
    ldp::rate_dynamic(&path, &field, &kernel.inner).map_err(err)
}

/// Ensemble mean of the exponential martingale Λ_t(G) for a time-constant
/// field; returns (mean, standard_error).
#[pyfunction]
fn martingale_mean(
    kernel: &PyKernel,
    phi: Vec<f64>,
    g_values: Vec<f64>,
    t: f64,
    seed: u64,
    replicas: usize,
) -> PyResult<(f64, f64)> {
    let n = phi.len();
    let g = grid(n)?;
    let field = ldp::ControlField::time_constant(g, g_values).map_err(err)?;
    let est =
        ldp::martingale_mean(&kernel.inner, &phi, n, &field, t, seed, replicas).map_err(err)?;
    Ok((est.mean, est.standard_error))
}

#[pymodule]
fn nurn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_function(wrap_pyfunction!(grid_nodes, m)?)?;
    m.add_function(wrap_pyfunction!(quadrature, m)?)?;
    m.add_function(wrap_pyfunction!(solve_density, m)?)?;
    m.add_function(wrap_pyfunction!(density_expm, m)?)?;
    m.add_function(wrap_pyfunction!(semigroup_apply, m)?)?;
    m.add_function(wrap_pyfunction!(mean_counts, m)?)?;
    m.add_function(wrap_pyfunction!(theta_sq, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(sample_fluctuation, m)?)?;
    m.add_function(wrap_pyfunction!(clt_check, m)?)?;
    m.add_function(wrap_pyfunction!(rate_initial, m)?)?;
    m.add_function(wrap_pyfunction!(tilted_density, m)?)?;
    m.add_function(wrap_pyfunction!(control_field, m)?)?;
    m.add_function(wrap_pyfunction!(rate_dynamic, m)?)?;
    m.add_function(wrap_pyfunction!(martingale_mean, m)?)?;
    Ok(())
}
