//! Sample statistics used by the Monte Carlo validation paths.

use crate::error::{Error, Result};

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Unbiased sample variance (divisor n-1).
pub fn variance(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "variance needs >= 2 samples, got {}",
            samples.len()
        )));
    }
    let m = mean(samples);
    let ss: f64 = samples.iter().map(|x| (x - m) * (x - m)).sum();
    Ok(ss / (samples.len() - 1) as f64)
}

/// k-th central sample moment with divisor n.
pub fn central_moment(samples: &[f64], k: u32) -> f64 {
    let m = mean(samples);
    samples.iter().map(|x| (x - m).powi(k as i32)).sum::<f64>() / samples.len() as f64
}

/// Standard error of the unbiased variance estimator via the exact
/// fourth-moment formula Var(s²) = (μ4 − σ⁴(n−3)/(n−1))/n, with the sample
/// moments plugged in. Floored at the smallest positive double so callers
/// can always divide by it.
pub fn variance_standard_error(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "variance standard error needs >= 2 samples, got {n}"
        )));
    }
    let s2 = variance(samples)?;
    let m4 = central_moment(samples, 4);
    let var_s2 = (m4 - s2 * s2 * (n as f64 - 3.0) / (n as f64 - 1.0)) / n as f64;
    Ok(var_s2.max(0.0).sqrt().max(f64::MIN_POSITIVE))
}

/// Standard error of the sample mean.
pub fn mean_standard_error(samples: &[f64]) -> Result<f64> {
    let v = variance(samples)?;
    Ok((v / samples.len() as f64).sqrt().max(f64::MIN_POSITIVE))
}

/// Sample covariance (divisor n-1) of paired samples.
pub fn covariance(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!(
            "covariance of {} vs {} samples",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData(
            "covariance needs >= 2 samples".into(),
        ));
    }
    let mx = mean(xs);
    let my = mean(ys);
    let s: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(s / (xs.len() - 1) as f64)
}

/// Skewness and excess kurtosis with their large-sample standard errors
/// (√(6/n) and √(24/n)); a cheap normality diagnostic.
pub fn normality_diagnostic(samples: &[f64]) -> Result<NormalityDiagnostic> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::InsufficientData(
            "normality diagnostic needs >= 4 samples".into(),
        ));
    }
    let m2 = central_moment(samples, 2);
    let m3 = central_moment(samples, 3);
    let m4 = central_moment(samples, 4);
    Ok(NormalityDiagnostic {
        skewness: m3 / m2.powf(1.5),
        skewness_se: (6.0 / n as f64).sqrt(),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        excess_kurtosis_se: (24.0 / n as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct NormalityDiagnostic {
    pub skewness: f64,
    pub skewness_se: f64,
    pub excess_kurtosis: f64,
    pub excess_kurtosis_se: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_of_known_sample() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((variance(&xs).unwrap() - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn variance_needs_two() {
        assert!(matches!(variance(&[1.0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn covariance_of_independent_constant_is_zero() {
        let xs = [1.0, 1.0, 1.0];
        let ys = [2.0, 3.0, 4.0];
        assert_eq!(covariance(&xs, &ys).unwrap(), 0.0);
    }

    #[test]
    fn variance_se_positive_even_for_degenerate_samples() {
        let xs = [2.0, 2.0, 2.0, 2.0];
        assert!(variance_standard_error(&xs).unwrap() > 0.0);
    }
}
