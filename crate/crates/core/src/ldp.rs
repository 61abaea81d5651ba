//! Large-deviation rate functionals, the control field of the tilted
//! dynamics, and the exponential martingale.
//!
//! For a path with density ψ in D_0 (positive, smooth, with time-constant
//! space integral) and a product kernel λ(x,y) = λ1(x)λ2(y), the dynamic
//! rate I_dyn is attained at an explicit control field
//!     G_s(x) = log[(∂_sψ + √((∂_sψ)² + 4ψλ1λ2·C_s)) / (2 C_s λ2(x))],
//! where C_s > 0 is the unique root of the convex function
//!     ϖ(c) = 2c − ∫ √((∂_sψ)² + 4ψλ1λ2·c) dy.
//! The tilted density equation, the rate integrals, and the martingale
//!     Λ_t = exp{N μ_t(G_t) − N μ_0(G_0) − N ∫ μ_s((∂_s + B^N)G_s) ds}
//! are evaluated with the same grid quadrature as everything else.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, TestFunction};
use crate::kernel::{DiscreteKernel, RateKernel};
use crate::seed::replica_rng;
use crate::sim::{sample_initial, EventTrajectory, Simulator};
use crate::stats;

/// Nodes below this are treated as zero: the G formula needs log ψ, so such
/// paths are rejected rather than clamped.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Path density ψ(s, x) on a uniform time grid, with its time derivative.
///
/// Paths produced by [`tilted_density`] carry the exact right-hand side as
/// the derivative; paths loaded from samples fall back to second-order
/// finite differences.
#[derive(Debug, Clone)]
pub struct PathDensity {
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub values: Array2<f64>,
    pub dvalues: Array2<f64>,
}

impl PathDensity {
    /// Build from raw samples; derivatives by centered differences inside,
    /// one-sided second-order stencils at the ends.
    pub fn from_values(grid: GridSpec, times: Vec<f64>, values: Array2<f64>) -> Result<Self> {
        let k = times.len();
        if k < 3 {
            return Err(Error::Data(format!(
                "path density needs >= 3 time nodes, got {k}"
            )));
        }
        if values.nrows() != k || values.ncols() != grid.len() {
            return Err(Error::shape(format!(
                "{}x{} path values for {} times x {} nodes",
                values.nrows(),
                values.ncols(),
                k,
                grid.len()
            )));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::Data("path times must be increasing".into()));
        }
        for w in times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::Data("path times must have a uniform step".into()));
            }
        }
        let m = grid.len();
        let mut dvalues = Array2::<f64>::zeros((k, m));
        for j in 0..m {
            dvalues[[0, j]] =
                (-3.0 * values[[0, j]] + 4.0 * values[[1, j]] - values[[2, j]]) / (2.0 * dt);
            for s in 1..k - 1 {
                dvalues[[s, j]] = (values[[s + 1, j]] - values[[s - 1, j]]) / (2.0 * dt);
            }
            dvalues[[k - 1, j]] = (3.0 * values[[k - 1, j]] - 4.0 * values[[k - 2, j]]
                + values[[k - 3, j]])
                / (2.0 * dt);
        }
        Ok(PathDensity {
            grid,
            times,
            values,
            dvalues,
        })
    }

    /// Build from per-time sample rows (ordered by time).
    pub fn from_sampled_rows(grid: GridSpec, times: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != times.len() {
            return Err(Error::shape(format!(
                "{} sample rows for {} times",
                rows.len(),
                times.len()
            )));
        }
        if rows.iter().any(|r| r.len() != grid.len()) {
            return Err(Error::shape("sample row length does not match the grid"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((times.len(), grid.len()), flat).expect("shape");
        PathDensity::from_values(grid, times, values)
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn snapshot(&self, s: usize) -> TestFunction {
        TestFunction {
            grid: self.grid,
            values: self.values.row(s).to_vec(),
        }
    }

    /// Worst violation of D_0 membership: max_s |∫ ∂_sψ(s,·)|.
    pub fn d0_violation(&self) -> f64 {
        self.dvalues
            .rows()
            .into_iter()
            .map(|r| self.grid.quad_unchecked(r.as_slice().unwrap()).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Largest drift of the space integral from its initial value.
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

    pub fn sup_distance(&self, other: &PathDensity) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn check_positive(&self) -> Result<()> {
        let min = self.min_value();
        if !(min >= POSITIVITY_FLOOR) {
            return Err(Error::domain(format!(
                "path density node {min} below the positivity floor {POSITIVITY_FLOOR}"
            )));
        }
        Ok(())
    }
}

/// Control field G_s(x) on a grid; a single time row means "constant in time".
#[derive(Debug, Clone)]
pub struct ControlField {
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub values: Array2<f64>,
}

impl ControlField {
    pub fn time_constant(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::shape(format!(
                "{} control values on a {}-node grid",
                values.len(),
                grid.len()
            )));
        }
        let values = Array2::from_shape_vec((1, grid.len()), values).expect("shape");
        Ok(ControlField {
            grid,
            times: vec![0.0],
            values,
        })
    }

    pub fn zero(grid: GridSpec) -> Self {
        ControlField::time_constant(grid, vec![0.0; grid.len()]).expect("lengths match")
    }

    pub fn is_time_constant(&self) -> bool {
        self.times.len() == 1
    }

    /// Values at time s by linear interpolation, clamped at the ends.
    pub fn value_at(&self, s: f64) -> Vec<f64> {
        if self.is_time_constant() {
            return self.values.row(0).to_vec();
        }
        let times = &self.times;
        if s <= times[0] {
            return self.values.row(0).to_vec();
        }
        let last = times.len() - 1;
        if s >= times[last] {
            return self.values.row(last).to_vec();
        }
        let k = times.partition_point(|&t| t <= s) - 1;
        let w = (s - times[k]) / (times[k + 1] - times[k]);
        self.values
            .row(k)
            .iter()
            .zip(self.values.row(k + 1))
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    pub fn sup_distance(&self, other: &ControlField) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Relative-entropy rate of an initial profile against the Poisson profile φ:
/// ∫ ψ0 log ψ0 − ψ0 log φ + φ − ψ0, with 0·log 0 = 0.
pub fn rate_initial(psi0: &TestFunction, phi: &TestFunction) -> Result<f64> {
    if psi0.grid != phi.grid {
        return Err(Error::shape("psi0 and phi on different grids"));
    }
    let mut integrand = Vec::with_capacity(phi.values.len());
    for (&p0, &ph) in psi0.values.iter().zip(&phi.values) {
        if !(ph > 0.0) {
            return Err(Error::domain(format!(
                "reference profile node {ph} must be > 0"
            )));
        }
        if p0 < 0.0 {
            return Err(Error::domain(format!(
                "initial profile node {p0} is negative"
            )));
        }
        let entropy = if p0 == 0.0 {
            0.0
        } else {
            p0 * p0.ln() - p0 * ph.ln()
        };
        integrand.push(entropy + ph - p0);
    }
    psi0.grid.quadrature(&integrand)
}

/// Nonlinear operator (B f)(x) = ∫ λ(x,y)(e^{f(y)−f(x)} − 1) dy on f's grid.
///
/// Evaluated pairwise with exp_m1 of the difference, so constant f gives an
/// exact zero term by term.
pub fn nonlinear_b(f: &TestFunction, k: &RateKernel) -> Result<TestFunction> {
    let grid = f.grid;
    let m = grid.len();
    let w = grid.weight();
    let mut out = vec![0.0; m];
    match k.marginals() {
        Some((m1, m2)) => {
            let l1 = m1.sample(grid);
            let l2 = m2.sample(grid);
            for i in 0..m {
                let fi = f.values[i];
                let mut acc = 0.0;
                for j in 0..m {
                    acc += l2[j] * (f.values[j] - fi).exp_m1();
                }
                out[i] = l1[i] * acc * w;
            }
        }
        None => {
            for i in 0..m {
                let fi = f.values[i];
                let mut acc = 0.0;
                for j in 0..m {
                    acc += k.eval(grid.node(i), grid.node(j))? * (f.values[j] - fi).exp_m1();
                }
                out[i] = acc * w;
            }
        }
    }
    TestFunction::new(grid, out)
}

/// Discrete operator (B^N g)(i/n) = (1/n)·Σ_j λ(i/n, j/n)(e^{g_j − g_i} − 1),
/// the exact per-box sum used by the martingale.
pub fn nonlinear_b_discrete(g: &[f64], dk: &DiscreteKernel) -> Result<Vec<f64>> {
    let n = dk.n;
    if g.len() != n {
        return Err(Error::shape(format!(
            "{} control values for {n} boxes",
            g.len()
        )));
    }
    let mut out = vec![0.0; n];
    for i in 0..n {
        let gi = g[i];
        let mut acc = 0.0;
        for j in 0..n {
            acc += dk.rates[[i, j]] * (g[j] - gi).exp_m1();
        }
        out[i] = acc / n as f64;
    }
    Ok(out)
}

/// ϖ(c) = 2c − ∫ √((∂_sψ)² + 4ψλ1λ2·c) dy for one time slice.
fn varpi(c: f64, dpsi: &[f64], coeff: &[f64], grid: GridSpec) -> f64 {
    let integrand: f64 = dpsi
        .iter()
        .zip(coeff)
        .map(|(d, a)| (d * d + a * c).sqrt())
        .sum::<f64>()
        * grid.weight();
    2.0 * c - integrand
}

/// Unique positive root of ϖ by bisection with bracket expansion.
///
/// `lambda1`, `lambda2` are the product-kernel marginals sampled on the grid.
pub fn find_cs(
    psi_s: &[f64],
    dpsi_s: &[f64],
    lambda1: &[f64],
    lambda2: &[f64],
    grid: GridSpec,
) -> Result<f64> {
    let m = grid.len();
    if psi_s.len() != m || dpsi_s.len() != m || lambda1.len() != m || lambda2.len() != m {
        return Err(Error::shape("find_cs inputs on mismatched grids"));
    }
    if psi_s.iter().all(|&p| p < POSITIVITY_FLOOR) {
        return Err(Error::DegeneratePath(
            "psi vanishes on the whole slice; the control field is undefined".into(),
        ));
    }
    // coeff_y = 4 ψ λ1 λ2, the multiplier of c under the square root
    let coeff: Vec<f64> = psi_s
        .iter()
        .zip(lambda1.iter().zip(lambda2))
        .map(|(p, (a, b))| 4.0 * p * a * b)
        .collect();

    let mut lo = 1e-16;
    if varpi(lo, dpsi_s, &coeff, grid) > 0.0 {
        return Err(Error::DegeneratePath(
            "root of the C_s equation lies below the bracket floor".into(),
        ));
    }
    let mut hi = 1.0;
    let mut expansions = 0;
    while varpi(hi, dpsi_s, &coeff, grid) <= 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::NumericalDegeneracy(
                "C_s bracket expansion failed to find a sign change".into(),
            ));
        }
    }
    let mut iterations = 0;
    while hi - lo > 1e-13 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if varpi(mid, dpsi_s, &coeff, grid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
        if iterations > 300 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Control field and per-slice constants produced by the explicit formula.
#[derive(Debug, Clone)]
pub struct ControlFieldResult {
    pub field: ControlField,
    pub cs: Vec<f64>,
    /// max_s |∫ ∂_sψ| — D_0 membership is reported, never assumed.
    pub d0_violation: f64,
}

impl ControlFieldResult {
    /// Sup-norm of the constructed field.
    pub fn values_sup(&self) -> f64 {
        self.field
            .values
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }
}

/// The optimal control field of a strictly positive path under a
/// product-form kernel, from the explicit log formula.
pub fn control_field(psi: &PathDensity, k: &RateKernel) -> Result<ControlFieldResult> {
    let (m1, m2) = k.marginals().ok_or_else(|| {
        Error::InvalidArgument(
            "the control-field construction requires a product-form kernel".into(),
        )
    })?;
    psi.check_positive()?;
    let grid = psi.grid;
    let l1 = m1.sample(grid);
    let l2 = m2.sample(grid);
    if l1.iter().chain(&l2).any(|v| !(*v > 0.0)) {
        return Err(Error::domain("kernel marginals must be > 0 on the grid"));
    }

    let steps = psi.times.len();
    let m = grid.len();
    let mut values = Array2::<f64>::zeros((steps, m));
    let mut cs = Vec::with_capacity(steps);
    for s in 0..steps {
        let psi_s = psi.values.row(s);
        let dpsi_s = psi.dvalues.row(s);
        let c = find_cs(
            psi_s.as_slice().unwrap(),
            dpsi_s.as_slice().unwrap(),
            &l1,
            &l2,
            grid,
        )?;
        for j in 0..m {
            let d = dpsi_s[j];
            let prod = 4.0 * psi_s[j] * l1[j] * l2[j] * c;
            let root = (d * d + prod).sqrt();
            // For d < 0 the difference form avoids cancellation:
            // d + root = prod / (root - d).
            let numerator = if d >= 0.0 {
                d + root
            } else {
                prod / (root - d)
            };
            let arg = numerator / (2.0 * c * l2[j]);
            if !(arg > 0.0) || !arg.is_finite() {
                return Err(Error::NumericalDegeneracy(format!(
                    "control-field log argument {arg} at slice {s}, node {j}"
                )));
            }
            values[[s, j]] = arg.ln();
        }
        cs.push(c);
    }
    Ok(ControlFieldResult {
        field: ControlField {
            grid,
            times: psi.times.clone(),
            values,
        },
        cs,
        d0_violation: psi.d0_violation(),
    })
}

/// Right-hand side of the tilted density equation for a fixed control slice g:
/// gain ∫ψ(y)λ(y,x)e^{g(x)−g(y)}dy minus loss ψ(x)∫λ(x,y)e^{g(y)−g(x)}dy.
enum TiltedOp {
    Product {
        l1: Vec<f64>,
        l2: Vec<f64>,
        weight: f64,
    },
    Dense {
        lam: Array2<f64>,
        weight: f64,
    },
}

impl TiltedOp {
    fn new(k: &RateKernel, grid: GridSpec) -> Result<Self> {
        match k.marginals() {
            Some((m1, m2)) => {
                let l1 = m1.sample(grid);
                let l2 = m2.sample(grid);
                if l1.iter().chain(&l2).any(|v| !(*v > 0.0)) {
                    return Err(Error::domain("kernel marginals must be > 0 on the grid"));
                }
                Ok(TiltedOp::Product {
                    l1,
                    l2,
                    weight: grid.weight(),
                })
            }
            None => {
                let m = grid.len();
                let mut lam = Array2::<f64>::zeros((m, m));
                for i in 0..m {
                    for j in 0..m {
                        lam[[i, j]] = k.eval(grid.node(i), grid.node(j))?;
                    }
                }
                Ok(TiltedOp::Dense {
                    lam,
                    weight: grid.weight(),
                })
            }
        }
    }

    /// out = gain − loss given e^{g} and e^{−g} at the nodes.
    fn rhs(&self, psi: &[f64], eg: &[f64], emg: &[f64], out: &mut [f64]) {
        match self {
            TiltedOp::Product { l1, l2, weight } => {
                // a = ∫ ψ λ1 e^{-g},  b = ∫ λ2 e^{g}
                let a: f64 = psi
                    .iter()
                    .zip(l1.iter().zip(emg))
                    .map(|(p, (l, e))| p * l * e)
                    .sum::<f64>()
                    * weight;
                let b: f64 = l2.iter().zip(eg).map(|(l, e)| l * e).sum::<f64>() * weight;
                for j in 0..psi.len() {
                    out[j] = l2[j] * eg[j] * a - psi[j] * l1[j] * emg[j] * b;
                }
            }
            TiltedOp::Dense { lam, weight } => {
                let m = psi.len();
                for x in 0..m {
                    let mut gain = 0.0;
                    let mut loss = 0.0;
                    for y in 0..m {
                        gain += psi[y] * lam[[y, x]] * eg[x] * emg[y];
                        loss += lam[[x, y]] * eg[y] * emg[x];
                    }
                    out[x] = (gain - psi[x] * loss) * weight;
                }
            }
        }
    }
}

fn exp_pair(g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let eg: Vec<f64> = g.iter().map(|v| v.exp()).collect();
    let emg: Vec<f64> = g.iter().map(|v| (-v).exp()).collect();
    (eg, emg)
}

/// RK4 integration of the tilted density equation from γ over [0, horizon].
/// The returned path carries the exact right-hand side as its derivative.
pub fn tilted_density(
    gamma: &TestFunction,
    g: &ControlField,
    k: &RateKernel,
    dt: f64,
    horizon: f64,
) -> Result<PathDensity> {
    if gamma.values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::domain(
            "tilted initial profile must be strictly positive",
        ));
    }
    if g.grid != gamma.grid {
        return Err(Error::shape("control field and profile on different grids"));
    }
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidArgument(
            "tilted solve needs dt > 0 and horizon > 0".into(),
        ));
    }
    let grid = gamma.grid;
    let m = grid.len();
    let op = TiltedOp::new(k, grid)?;
    let const_exp = if g.is_time_constant() {
        Some(exp_pair(&g.value_at(0.0)))
    } else {
        None
    };
    let exps_at = |s: f64| -> (Vec<f64>, Vec<f64>) {
        match &const_exp {
            Some(pair) => pair.clone(),
            None => exp_pair(&g.value_at(s)),
        }
    };

    let mut psi = gamma.values.clone();
    let mut times = vec![0.0];
    let mut rows = vec![psi.clone()];
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
        let (eg0, emg0) = exps_at(t);
        let (egh, emgh) = exps_at(t + 0.5 * h);
        let (eg1, emg1) = exps_at(t + h);

        op.rhs(&psi, &eg0, &emg0, &mut k1);
        for j in 0..m {
            stage[j] = psi[j] + 0.5 * h * k1[j];
        }
        op.rhs(&stage, &egh, &emgh, &mut k2);
        for j in 0..m {
            stage[j] = psi[j] + 0.5 * h * k2[j];
        }
        op.rhs(&stage, &egh, &emgh, &mut k3);
        for j in 0..m {
            stage[j] = psi[j] + h * k3[j];
        }
        op.rhs(&stage, &eg1, &emg1, &mut k4);
        for j in 0..m {
            psi[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }

        step += 1;
        let t_next = if h < dt { horizon } else { step as f64 * dt };
        times.push(t_next.min(horizon));
        rows.push(psi.clone());
        if h < dt {
            break;
        }
    }

    let steps = times.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((steps, m), flat).expect("row shape");
    let mut dvalues = Array2::<f64>::zeros((steps, m));
    let mut rhs_row = vec![0.0; m];
    for s in 0..steps {
        let (eg, emg) = exps_at(times[s]);
        op.rhs(values.row(s).as_slice().unwrap(), &eg, &emg, &mut rhs_row);
        dvalues
            .row_mut(s)
            .iter_mut()
            .zip(&rhs_row)
            .for_each(|(d, r)| *d = *r);
    }
    Ok(PathDensity {
        grid,
        times,
        values,
        dvalues,
    })
}

/// The hydrodynamic path as a [`PathDensity`] (zero tilt), with exact
/// derivatives.
pub fn hydro_path(
    phi: &TestFunction,
    k: &RateKernel,
    dt: f64,
    horizon: f64,
) -> Result<PathDensity> {
    tilted_density(phi, &ControlField::zero(phi.grid), k, dt, horizon)
}

/// Sup-norm residual of the balance equation satisfied by (ψ, G).
pub fn balance_residual(psi: &PathDensity, g: &ControlField, k: &RateKernel) -> Result<f64> {
    if g.grid != psi.grid {
        return Err(Error::shape("control field and path on different grids"));
    }
    let op = TiltedOp::new(k, psi.grid)?;
    let m = psi.grid.len();
    let mut rhs = vec![0.0; m];
    let mut worst: f64 = 0.0;
    for (s, &t) in psi.times.iter().enumerate() {
        let (eg, emg) = exp_pair(&g.value_at(t));
        op.rhs(psi.values.row(s).as_slice().unwrap(), &eg, &emg, &mut rhs);
        for j in 0..m {
            worst = worst.max((psi.dvalues[[s, j]] - rhs[j]).abs());
        }
    }
    Ok(worst)
}

/// ϑ(G) = ∬ ∂_sψ·G − ∭ ψ λ (e^{G(y)−G(x)} − 1), trapezoid in time and the
/// module quadrature in space. Evaluated at the constructed field this is
/// I_dyn; at arbitrary fields it is a lower bound.
pub fn rate_dynamic(psi: &PathDensity, g: &ControlField, k: &RateKernel) -> Result<f64> {
    if g.grid != psi.grid {
        return Err(Error::shape("control field and path on different grids"));
    }
    let grid = psi.grid;
    let steps = psi.times.len();
    let mut slice_values = Vec::with_capacity(steps);
    for (s, &t) in psi.times.iter().enumerate() {
        let g_s = TestFunction::new(grid, g.value_at(t))?;
        let b = nonlinear_b(&g_s, k)?;
        let pairing: Vec<f64> = psi
            .dvalues
            .row(s)
            .iter()
            .zip(&g_s.values)
            .map(|(d, gv)| d * gv)
            .collect();
        let drive: Vec<f64> = psi
            .values
            .row(s)
            .iter()
            .zip(&b.values)
            .map(|(p, bv)| p * bv)
            .collect();
        slice_values.push(grid.quad_unchecked(&pairing) - grid.quad_unchecked(&drive));
    }
    let dt = psi.dt();
    let mut total = 0.0;
    for (s, v) in slice_values.iter().enumerate() {
        let w = if s == 0 || s == steps - 1 { 0.5 } else { 1.0 };
        total += w * v;
    }
    Ok(total * dt)
}

/// Max of ϑ over a finite family of trial fields: a certified lower bound on
/// the dynamic rate.
pub fn rate_dynamic_lower_bound(
    psi: &PathDensity,
    k: &RateKernel,
    trial_fields: &[ControlField],
) -> Result<f64> {
    if trial_fields.is_empty() {
        return Err(Error::InvalidArgument("empty trial family".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for g in trial_fields {
        best = best.max(rate_dynamic(psi, g, k)?);
    }
    Ok(best)
}

/// Λ_t(G) along one event-resolved trajectory, at the requested times.
///
/// The evaluation telescopes the jump part: between events
/// d(N μ_s(G_s)) = N μ_s(∂_s G_s) ds, which cancels the ∂_s term of the
/// integral exactly, leaving
///   log Λ_t = Σ_{events ≤ t} (G(to) − G(from)) − ∫_0^t Σ_i X_s(i)(B^N G_s)(i/n) ds.
/// The remaining integrand is piecewise constant in s for time-constant G,
/// so the integral is exact; time-varying fields are integrated by trapezoid
/// on the field's own time grid.
pub fn martingale_lambda(
    traj: &EventTrajectory,
    g: &ControlField,
    dk: &DiscreteKernel,
    eval_times: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let n = dk.n;
    if g.grid.len() != n {
        return Err(Error::shape(format!(
            "control field with {} nodes for {n} boxes",
            g.grid.len()
        )));
    }
    if traj.initial.n != n {
        return Err(Error::shape(format!(
            "trajectory with {} boxes for a {n}-box kernel",
            traj.initial.n
        )));
    }
    let mut prev = 0.0;
    for &t in eval_times {
        if t < prev || t > traj.horizon + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "evaluation times must be ascending within [0, {}]",
                traj.horizon
            )));
        }
        prev = t;
    }

    // Time-constant fast path: one B^N evaluation, running weighted sum.
    let const_setup = if g.is_time_constant() {
        let row = g.value_at(0.0);
        Some((row.clone(), nonlinear_b_discrete(&row, dk)?))
    } else {
        None
    };

    // Σ_i X_s(i)·(B^N G_s)(i/n) for the current counts at time s.
    let weighted_b = |counts: &[u64], s: f64| -> Result<f64> {
        let b = match &const_setup {
            Some((_, b)) => b.clone(),
            None => nonlinear_b_discrete(&g.value_at(s), dk)?,
        };
        Ok(counts.iter().zip(&b).map(|(&c, bv)| c as f64 * bv).sum())
    };

    // ∫_a^b Σ X(i) B^N G_s ds with counts frozen.
    let segment_integral = |counts: &[u64], a: f64, b: f64| -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        match &const_setup {
            Some((_, bvals)) => {
                let w: f64 = counts.iter().zip(bvals).map(|(&c, bv)| c as f64 * bv).sum();
                Ok(w * (b - a))
            }
            None => {
                let mut nodes = vec![a];
                for &t in &g.times {
                    if t > a && t < b {
                        nodes.push(t);
                    }
                }
                nodes.push(b);
                let mut acc = 0.0;
                for w in nodes.windows(2) {
                    let ha = weighted_b(counts, w[0])?;
                    let hb = weighted_b(counts, w[1])?;
                    acc += 0.5 * (ha + hb) * (w[1] - w[0]);
                }
                Ok(acc)
            }
        }
    };

    let mut counts = traj.initial.counts.clone();
    let mut log_jumps = 0.0;
    let mut integral = 0.0;
    let mut t_prev = 0.0;
    let mut event_idx = 0;
    let mut out = Vec::with_capacity(eval_times.len());

    for &tau in eval_times {
        while event_idx < traj.events.len() && traj.events[event_idx].time <= tau {
            let e = traj.events[event_idx];
            integral += segment_integral(&counts, t_prev, e.time)?;
            let g_e = match &const_setup {
                Some((row, _)) => row.clone(),
                None => g.value_at(e.time),
            };
            log_jumps += g_e[e.to] - g_e[e.from];
            if counts[e.from] == 0 {
                return Err(Error::Data(
                    "event log inconsistent with box counts (empty source box)".into(),
                ));
            }
            counts[e.from] -= 1;
            counts[e.to] += 1;
            t_prev = e.time;
            event_idx += 1;
        }
        let partial = integral + segment_integral(&counts, t_prev, tau)?;
        out.push((tau, (log_jumps - partial).exp()));
    }
    Ok(out)
}

/// Ensemble estimate of E Λ_t(G) under Poisson(φ) initial data.
#[derive(Debug, Clone, Copy)]
pub struct MartingaleEstimate {
    pub t: f64,
    pub mean: f64,
    pub standard_error: f64,
    pub replicas: usize,
}

pub fn martingale_mean(
    k: &RateKernel,
    phi: &[f64],
    n: usize,
    g: &ControlField,
    t: f64,
    seed: u64,
    replicas: usize,
) -> Result<MartingaleEstimate> {
    if replicas < 2 {
        return Err(Error::InsufficientData(
            "martingale mean needs >= 2 replicas".into(),
        ));
    }
    let dk = k.discretize(n)?;
    let sim = Simulator::new(&dk);
    let samples: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let mut rng = replica_rng(seed, r);
            let x0 = sample_initial(phi, n, &mut rng)?;
            let traj = sim.simulate_events(&x0, t, &mut rng)?;
            let lam = martingale_lambda(&traj, g, &dk, &[t])?;
            Ok(lam[0].1)
        })
        .collect::<Result<_>>()?;
    Ok(MartingaleEstimate {
        t,
        mean: stats::mean(&samples),
        standard_error: stats::mean_standard_error(&samples)?,
        replicas,
    })
}

/// Serialize a path density as `time,x,psi` rows.
pub fn write_path_csv(psi: &PathDensity) -> String {
    let mut out = String::from("time,x,psi\n");
    for (s, &t) in psi.times.iter().enumerate() {
        for j in 0..psi.grid.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                t,
                psi.grid.node(j),
                psi.values[[s, j]]
            ));
        }
    }
    out
}

/// Parse `time,x,psi` rows (any order, complete lattice required). Derivatives
/// are recomputed by finite differences unless a companion `time,x,dpsi` text
/// is supplied.
pub fn read_path_csv(text: &str, dpsi_text: Option<&str>) -> Result<PathDensity> {
    let (times, grid, values) = parse_lattice(text, "psi")?;
    let mut path = PathDensity::from_values(grid, times, values)?;
    if let Some(dtext) = dpsi_text {
        let (dtimes, dgrid, dvalues) = parse_lattice(dtext, "dpsi")?;
        if dgrid != path.grid || dtimes.len() != path.times.len() {
            return Err(Error::shape("dpsi lattice does not match the psi lattice"));
        }
        for (a, b) in path.times.iter().zip(&dtimes) {
            if (a - b).abs() > 1e-9 {
                return Err(Error::Data("dpsi time nodes differ from psi".into()));
            }
        }
        path.dvalues = dvalues;
    }
    Ok(path)
}

fn parse_lattice(text: &str, what: &str) -> Result<(Vec<f64>, GridSpec, Array2<f64>)> {
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if lineno == 0 || line.chars().next().is_some_and(|c| c.is_alphabetic()) {
            // header row
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Data(format!(
                "{what} CSV line {} has {} fields, expected 3",
                lineno + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Data(format!("bad number `{s}` on line {}", lineno + 1)))
        };
        rows.push((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{what} CSV holds no data rows")));
    }
    let mut times: Vec<f64> = rows.iter().map(|r| r.0).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    let mut xs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    let m = xs.len();
    let grid = GridSpec::new(m)?;
    for (j, &x) in xs.iter().enumerate() {
        if (x - grid.node(j)).abs() > 1e-9 {
            return Err(Error::Data(format!(
                "{what} space node {x} is not node {}/{m} of a uniform grid",
                j + 1
            )));
        }
    }
    if rows.len() != times.len() * m {
        return Err(Error::Data(format!(
            "{what} lattice incomplete: {} rows for {} times x {m} nodes",
            rows.len(),
            times.len()
        )));
    }
    let mut values = Array2::<f64>::zeros((times.len(), m));
    let mut filled = ndarray::Array2::<u8>::zeros((times.len(), m));
    for (t, x, v) in rows {
        let si = times
            .partition_point(|&u| u < t - 1e-12 * t.abs().max(1.0))
            .min(times.len() - 1);
        let xi = xs.partition_point(|&u| u < x - 1e-12).min(m - 1);
        values[[si, xi]] = v;
        filled[[si, xi]] += 1;
    }
    if filled.iter().any(|&c| c != 1) {
        return Err(Error::Data(format!(
            "{what} lattice has duplicate or missing cells"
        )));
    }
    Ok((times, grid, values))
}
