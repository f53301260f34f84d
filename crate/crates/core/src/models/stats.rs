//! Quantiles and sample autocorrelations of a series.

use crate::error::{Error, Result};

/// `tau`-quantile by linear interpolation between order statistics
/// (position `(n - 1) tau`).
pub fn quantile(y: &[f64], tau: f64) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::invalid("quantile of an empty series"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!(
            "quantile level {tau} outside [0, 1]"
        )));
    }
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&s, tau))
}

pub(crate) fn quantile_sorted(sorted: &[f64], tau: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * tau;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sample autocorrelation at a lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Acf {
    pub value: f64,
    /// The series has zero variance; `value` is then 0 by convention.
    pub degenerate: bool,
}

/// `sum_i (y_i - ybar)(y_{i+k} - ybar) / sum_i (y_i - ybar)^2`.
pub fn acf(y: &[f64], k: usize) -> Result<Acf> {
    if k == 0 || k >= y.len() {
        return Err(Error::invalid(format!(
            "lag {k} needs 1 <= k < N = {}",
            y.len()
        )));
    }
    let (sum, degenerate) = acf_sum(y, k..=k);
    Ok(Acf {
        value: sum,
        degenerate,
    })
}

/// Sum of autocorrelations over `lags`, sharing the mean and denominator.
pub(crate) fn acf_sum(y: &[f64], lags: std::ops::RangeInclusive<usize>) -> (f64, bool) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let denom: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom <= 0.0 || !denom.is_finite() {
        return (0.0, true);
    }
    let mut total = 0.0;
    for k in lags {
        let num: f64 = y
            .iter()
            .zip(&y[k..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum();
        total += num / denom;
    }
    (total, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn even_count_median() {
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.5).unwrap(), 2.5);
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 1.0).unwrap(), 4.0);
        assert!(quantile(&[], 0.5).is_err());
    }

    #[test]
    fn trend_acf_tends_to_one() {
        let short: Vec<f64> = (1..=20).map(f64::from).collect();
        let long: Vec<f64> = (1..=5000).map(f64::from).collect();
        let a = acf(&short, 1).unwrap().value;
        let b = acf(&long, 1).unwrap().value;
        assert!(b > a && b > 0.999);
    }

    #[test]
    fn white_noise_within_bartlett_band() {
        let mut rng = RngStream::new(3, 0);
        let n = 1000;
        let trials = 200;
        let band = 1.96 / (n as f64).sqrt();
        let mut inside = 0;
        for _ in 0..trials {
            let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            if acf(&y, 1).unwrap().value.abs() < band {
                inside += 1;
            }
        }
        assert!(inside as f64 / trials as f64 > 0.9);
    }

    #[test]
    fn constant_series_is_flagged() {
        let r = acf(&[2.0; 10], 3).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.value, 0.0);
    }
}
