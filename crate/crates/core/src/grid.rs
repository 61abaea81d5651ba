//! Uniform grid on (0, 1] and the shared quadrature convention.
//!
//! Every module evaluates functions only at the nodes j/m, j = 1..m, and
//! integrates with the right-endpoint Riemann sum (1/m)·Σ f(j/m). This is
//! the same discrete sum the particle system itself uses, so refinement
//! comparisons between the m-grid operators and the n-box system carry no
//! second quadrature error term.

use crate::error::{Error, Result};

/// Uniform quadrature grid: m nodes at j/m (j = 1..m), weight 1/m each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    m: usize,
}

impl GridSpec {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 nodes, got {m}"
            )));
        }
        Ok(GridSpec { m })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Coordinate of the i-th node (0-based storage): (i+1)/m.
    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.m as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(move |i| self.node(i))
    }

    /// Right-endpoint Riemann sum (1/m)·Σ_j f(j/m).
    pub fn quadrature(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.m {
            return Err(Error::shape(format!(
                "quadrature of length-{} samples on a {}-node grid",
                f.len(),
                self.m
            )));
        }
        Ok(f.iter().sum::<f64>() / self.m as f64)
    }

    /// Same sum without the length check, for internal hot loops.
    pub(crate) fn quad_unchecked(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.m);
        f.iter().sum::<f64>() / self.m as f64
    }
}

/// A function sampled on a [`GridSpec`]: values(i) = f((i+1)/m).
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl TestFunction {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::shape(format!(
                "{} values on a {}-node grid",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite sample in grid function".into()));
        }
        Ok(TestFunction { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        TestFunction { grid, values }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        TestFunction {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn quadrature(&self) -> f64 {
        self.grid.quad_unchecked(&self.values)
    }

    pub fn sup_distance(&self, other: &TestFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadrature_of_one_is_exactly_one() {
        for m in [2, 25, 50, 100, 200] {
            let g = GridSpec::new(m).unwrap();
            assert_eq!(g.quadrature(&vec![1.0; m]).unwrap(), 1.0);
        }
    }

    #[test]
    fn quadrature_of_identity_m4() {
        // nodes 0.25, 0.5, 0.75, 1.0 -> mean 0.625
        let g = GridSpec::new(4).unwrap();
        let f: Vec<f64> = g.nodes().collect();
        assert_eq!(g.quadrature(&f).unwrap(), 0.625);
    }

    #[test]
    fn quadrature_of_zero() {
        let g = GridSpec::new(7).unwrap();
        assert_eq!(g.quadrature(&[0.0; 7]).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_length_mismatch_is_shape_error() {
        let g = GridSpec::new(4).unwrap();
        assert!(matches!(g.quadrature(&[1.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn grid_of_one_node_rejected() {
        assert!(GridSpec::new(1).is_err());
    }

    #[test]
    fn quadrature_refinement_converges_for_monotone_integrand() {
        // |Q_m - Q_{2m}| must shrink as m doubles for a fixed smooth monotone f.
        let f = |x: f64| (1.5 * x).exp();
        let q: Vec<f64> = [25usize, 50, 100, 200]
            .iter()
            .map(|&m| {
                let g = GridSpec::new(m).unwrap();
                let v: Vec<f64> = g.nodes().map(f).collect();
                g.quadrature(&v).unwrap()
            })
            .collect();
        let d1 = (q[0] - q[1]).abs();
        let d2 = (q[1] - q[2]).abs();
        let d3 = (q[2] - q[3]).abs();
        assert!(
            d1 > d2 && d2 > d3,
            "refinement not monotone: {d1} {d2} {d3}"
        );
    }

    proptest! {
        #[test]
        fn quadrature_is_linear(
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
            f in prop::collection::vec(-5.0f64..5.0, 32),
            g in prop::collection::vec(-5.0f64..5.0, 32),
        ) {
            let grid = GridSpec::new(32).unwrap();
            let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
            let lhs = grid.quadrature(&combo).unwrap();
            let rhs = a * grid.quadrature(&f).unwrap() + b * grid.quadrature(&g).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())));
        }
    }
}
