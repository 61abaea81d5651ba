//! Transition-rate kernels λ(x, y) on [0,1]² and their grid discretizations.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// One-dimensional marginal from the built-in expression palette.
///
/// The palette is deliberately small: constant, affine a + b·x and
/// sinusoid a + b·sin(2πx). Anything richer is supplied as a sampled table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginalFn {
    Constant(f64),
    Affine { a: f64, b: f64 },
    Sinusoid { a: f64, b: f64 },
}

impl MarginalFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            MarginalFn::Constant(c) => c,
            MarginalFn::Affine { a, b } => a + b * x,
            MarginalFn::Sinusoid { a, b } => a + b * (2.0 * std::f64::consts::PI * x).sin(),
        }
    }

    pub fn sample(&self, grid: GridSpec) -> Vec<f64> {
        grid.nodes().map(|x| self.eval(x)).collect()
    }

    /// Parse `constant(c)`, `affine(a,b)` or `sin(a,b)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| Error::Data(format!("malformed marginal expression `{s}`")))?;
        let args = rest
            .strip_suffix(')')
            .ok_or_else(|| Error::Data(format!("missing `)` in marginal expression `{s}`")))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("bad number `{t}` in `{s}`")))
            })
            .collect::<Result<_>>()?;
        match (name.trim(), nums.as_slice()) {
            ("constant", [c]) => Ok(MarginalFn::Constant(*c)),
            ("affine", [a, b]) => Ok(MarginalFn::Affine { a: *a, b: *b }),
            ("sin", [a, b]) => Ok(MarginalFn::Sinusoid { a: *a, b: *b }),
            _ => Err(Error::Data(format!(
                "unknown marginal `{name}` or wrong arity in `{s}`"
            ))),
        }
    }
}

impl std::fmt::Display for MarginalFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            MarginalFn::Constant(c) => write!(f, "constant({c})"),
            MarginalFn::Affine { a, b } => write!(f, "affine({a},{b})"),
            MarginalFn::Sinusoid { a, b } => write!(f, "sin({a},{b})"),
        }
    }
}

/// Rate kernel λ: [0,1]² → (0, ∞).
///
/// Either a product of two positive marginals λ1(x)·λ2(y), or a dense table
/// of samples at (i/n, j/n). Tables are never interpolated; every module
/// evaluates kernels only at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum RateKernel {
    Product {
        lambda1: MarginalFn,
        lambda2: MarginalFn,
    },
    Table(TableKernel),
}

/// Dense kernel samples: entry (i, j) = λ((i+1)/n, (j+1)/n).
#[derive(Debug, Clone, PartialEq)]
pub struct TableKernel {
    pub n: usize,
    pub rates: Array2<f64>,
}

impl TableKernel {
    pub fn new(n: usize, rates: Array2<f64>) -> Result<Self> {
        if rates.nrows() != n || rates.ncols() != n {
            return Err(Error::shape(format!(
                "table kernel declared {n}x{n} but holds {}x{}",
                rates.nrows(),
                rates.ncols()
            )));
        }
        if let Some(bad) = rates.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::domain(format!(
                "table kernel entry {bad} is not strictly positive"
            )));
        }
        Ok(TableKernel { n, rates })
    }

    /// Map a coordinate to its table index; the coordinate must sit on a node.
    fn index(&self, x: f64) -> Result<usize> {
        let t = x * self.n as f64;
        let j = t.round();
        if (t - j).abs() > 1e-9 || j < 1.0 || j > self.n as f64 {
            return Err(Error::domain(format!(
                "coordinate {x} is not a node of the {}-point table grid",
                self.n
            )));
        }
        Ok(j as usize - 1)
    }
}

impl RateKernel {
    /// λ ≡ c, the standard Ehrenfest kernel for c = 1.
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::domain(format!(
                "constant kernel value {c} must be > 0"
            )));
        }
        Ok(RateKernel::Product {
            lambda1: MarginalFn::Constant(c),
            lambda2: MarginalFn::Constant(1.0),
        })
    }

    pub fn product(lambda1: MarginalFn, lambda2: MarginalFn) -> Self {
        RateKernel::Product { lambda1, lambda2 }
    }

    pub fn table(n: usize, rates: Array2<f64>) -> Result<Self> {
        Ok(RateKernel::Table(TableKernel::new(n, rates)?))
    }

    /// Sample a closure at the n-grid nodes into a table kernel.
    pub fn table_from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let nf = n as f64;
        let rates =
            Array2::from_shape_fn((n, n), |(i, j)| f((i + 1) as f64 / nf, (j + 1) as f64 / nf));
        RateKernel::table(n, rates)
    }

    /// Marginals when the kernel is in product form (Assumption B).
    pub fn marginals(&self) -> Option<(MarginalFn, MarginalFn)> {
        match self {
            RateKernel::Product { lambda1, lambda2 } => Some((*lambda1, *lambda2)),
            RateKernel::Table(_) => None,
        }
    }

    /// Evaluate λ(x, y). Coordinates must lie in [0,1]; table kernels must be
    /// hit exactly on their own nodes.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::domain(format!(
                "coordinate ({x}, {y}) outside [0,1]^2"
            )));
        }
        let v = match self {
            RateKernel::Product { lambda1, lambda2 } => lambda1.eval(x) * lambda2.eval(y),
            RateKernel::Table(t) => t.rates[[t.index(x)?, t.index(y)?]],
        };
        if !(v > 0.0) {
            return Err(Error::domain(format!(
                "kernel value {v} at ({x}, {y}) is not > 0"
            )));
        }
        Ok(v)
    }

    /// Sample the kernel on the n-box grid, validating strict positivity of
    /// every entry eagerly.
    pub fn discretize(&self, n: usize) -> Result<DiscreteKernel> {
        if n == 0 {
            return Err(Error::InvalidArgument("discretization needs n >= 1".into()));
        }
        let nf = n as f64;
        let mut rates = Array2::<f64>::zeros((n, n));
        match self {
            RateKernel::Product { lambda1, lambda2 } => {
                let l1: Vec<f64> = (1..=n).map(|i| lambda1.eval(i as f64 / nf)).collect();
                let l2: Vec<f64> = (1..=n).map(|j| lambda2.eval(j as f64 / nf)).collect();
                // Product form means a pair of positive marginals, not just
                // a positive product.
                if let Some(bad) = l1.iter().chain(&l2).find(|v| !(**v > 0.0)) {
                    return Err(Error::domain(format!(
                        "product-kernel marginal value {bad} is not strictly positive"
                    )));
                }
                for (i, v1) in l1.iter().enumerate() {
                    for (j, v2) in l2.iter().enumerate() {
                        rates[[i, j]] = v1 * v2;
                    }
                }
            }
            RateKernel::Table(_) => {
                for i in 0..n {
                    for j in 0..n {
                        rates[[i, j]] = self.eval((i + 1) as f64 / nf, (j + 1) as f64 / nf)?;
                    }
                }
            }
        }
        if let Some(bad) = rates.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::domain(format!(
                "discretized kernel has non-positive entry {bad}"
            )));
        }
        let row_intensity: Vec<f64> = (0..n).map(|i| rates.row(i).sum()).collect();
        Ok(DiscreteKernel {
            n,
            rates,
            row_intensity,
        })
    }

    /// Parse the compact kernel grammar used by the CLI:
    /// `constant:<c>`, `product:<marginal>,<marginal>` or `table:<csv path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| Error::Data(format!("malformed kernel spec `{spec}`")))?;
        match kind.trim() {
            "constant" => {
                let c: f64 = rest
                    .trim()
                    .parse()
                    .map_err(|_| Error::Data(format!("bad constant `{rest}`")))?;
                RateKernel::constant(c)
            }
            "product" => {
                // Marginals both contain one comma inside parentheses, so split
                // at the comma that separates a `)` from the next name.
                let idx = rest.find("),").ok_or_else(|| {
                    Error::Data(format!("product spec `{rest}` needs two marginals"))
                })?;
                let (first, second) = rest.split_at(idx + 1);
                let second = second.trim_start_matches(',');
                Ok(RateKernel::product(
                    MarginalFn::parse(first)?,
                    MarginalFn::parse(second)?,
                ))
            }
            "table" => {
                let path = rest.trim();
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Data(format!("cannot read table `{path}`: {e}")))?;
                table_from_csv(&text)
            }
            other => Err(Error::Data(format!("unknown kernel type `{other}`"))),
        }
    }
}

impl std::fmt::Display for RateKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RateKernel::Product { lambda1, lambda2 } => {
                write!(f, "product:{lambda1},{lambda2}")
            }
            RateKernel::Table(t) => write!(f, "table[{}x{}]", t.n, t.n),
        }
    }
}

/// Parse an n×n numeric CSV (no header) into a table kernel.
pub fn table_from_csv(text: &str) -> Result<RateKernel> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("bad rate `{t}` on line {}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::Data("empty rate table".into()));
    }
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::shape(format!("rate table is not square ({n} rows)")));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let rates = Array2::from_shape_vec((n, n), flat).expect("shape checked above");
    RateKernel::table(n, rates)
}

/// Kernel samples on the n-box grid.
///
/// `rates[(i, j)] = λ((i+1)/n, (j+1)/n)` and `row_intensity[i]` is the exact
/// row sum Σ_j rates(i, j), the per-ball relocation intensity scaled by n.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    pub n: usize,
    pub rates: Array2<f64>,
    pub row_intensity: Vec<f64>,
}

impl DiscreteKernel {
    /// Per-ball jump rate out of box i (self-jumps counted): row_intensity/n.
    pub fn ball_rate(&self, i: usize) -> f64 {
        self.row_intensity[i] / self.n as f64
    }
}
