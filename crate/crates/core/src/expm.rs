//! Dense matrix exponential by scaling-and-squaring with a truncated
//! Taylor series.
//!
//! The operators exponentiated here are small (a few hundred rows) and
//! uniformly bounded, so Padé machinery is unnecessary: scale the matrix
//! until its infinity norm is below 1/2, sum the series until the next term
//! falls under 1e-14, then square back up.

use ndarray::Array2;

/// Truncation tolerance for the Taylor series of the scaled matrix.
const SERIES_TOL: f64 = 1e-14;

fn norm_inf(a: &Array2<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// exp(A) for a square matrix.
pub fn expm(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");

    let norm = norm_inf(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings as i32);

    let mut result = Array2::<f64>::eye(n);
    let mut term = Array2::<f64>::eye(n);
    let mut k = 1u64;
    loop {
        term = term.dot(&scaled) / k as f64;
        result += &term;
        if norm_inf(&term) <= SERIES_TOL {
            break;
        }
        k += 1;
        // With norm <= 1/2 the series needs ~20 terms; 200 is a hard stop.
        assert!(k < 200, "matrix exponential series failed to converge");
    }

    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exp_of_zero_is_identity() {
        let z = Array2::<f64>::zeros((5, 5));
        let e = expm(&z);
        assert_eq!(e, Array2::<f64>::eye(5));
    }

    #[test]
    fn exp_of_diagonal() {
        let d = array![[1.0, 0.0], [0.0, -2.0]];
        let e = expm(&d);
        assert!((e[[0, 0]] - 1f64.exp()).abs() < 1e-14);
        assert!((e[[1, 1]] - (-2f64).exp()).abs() < 1e-14);
        assert_eq!(e[[0, 1]], 0.0);
        assert_eq!(e[[1, 0]], 0.0);
    }

    #[test]
    fn exp_of_nilpotent() {
        // exp([[0,1],[0,0]]) = [[1,1],[0,1]]
        let a = array![[0.0, 1.0], [0.0, 0.0]];
        let e = expm(&a);
        assert!((e[[0, 0]] - 1.0).abs() < 1e-15);
        assert!((e[[0, 1]] - 1.0).abs() < 1e-15);
        assert!((e[[1, 1]] - 1.0).abs() < 1e-15);
        assert!(e[[1, 0]].abs() < 1e-15);
    }

    #[test]
    fn exp_of_rotation_generator() {
        // exp(t[[0,-1],[1,0]]) is a rotation by t.
        let t = 1.3;
        let a = array![[0.0, -t], [t, 0.0]];
        let e = expm(&a);
        assert!((e[[0, 0]] - t.cos()).abs() < 1e-13);
        assert!((e[[0, 1]] + t.sin()).abs() < 1e-13);
        assert!((e[[1, 0]] - t.sin()).abs() < 1e-13);
        assert!((e[[1, 1]] - t.cos()).abs() < 1e-13);
    }

    #[test]
    fn semigroup_property_under_squaring() {
        // exp(A)·exp(A) == exp(2A) exercises the squaring path (norm > 1/2).
        let a = array![[0.4, 0.7, -0.1], [0.2, -0.3, 0.5], [0.0, 0.6, 0.1]];
        let e1 = expm(&a);
        let e2 = expm(&(&a * 2.0));
        let prod = e1.dot(&e1);
        let err = (&prod - &e2).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "sup error {err}");
    }
}
