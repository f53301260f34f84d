//! Effective sample size by Geyer's initial positive sequence.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const MIN_ESS_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ess {
    pub value: f64,
    /// Zero-variance chain; `value` is then 1.
    pub degenerate: bool,
}

/// Sample autocorrelations `rho_0..rho_{n-1}` (biased, divide-by-n
/// autocovariance), via zero-padded FFT.
pub fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let c0 = buf[0].re;
    if c0 <= 0.0 {
        return vec![0.0; n];
    }
    buf[..n].iter().map(|c| c.re / c0).collect()
}

/// `ESS = n / (1 + 2 sum_k rho_k)`, the sum truncated at the first
/// non-positive pair `rho_{2k} + rho_{2k+1}`; clamped to `[1, n]`.
pub fn ess(x: &[f64]) -> Result<Ess> {
    let n = x.len();
    if n < MIN_ESS_SAMPLES {
        return Err(Error::invalid(format!(
            "ESS needs at least {MIN_ESS_SAMPLES} samples, got {n}"
        )));
    }
    let first = x[0];
    if x.iter().all(|&v| v == first) {
        return Ok(Ess {
            value: 1.0,
            degenerate: true,
        });
    }
    let rho = autocorrelation(x);
    let mut tau = -1.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho[2 * k] + rho[2 * k + 1];
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    let value = if tau > 0.0 { n as f64 / tau } else { n as f64 };
    Ok(Ess {
        value: value.clamp(1.0, n as f64),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0);
        let mut x = rng.normal() / (1.0 - phi * phi).sqrt();
        (0..n)
            .map(|_| {
                x = phi * x + rng.normal();
                x
            })
            .collect()
    }

    #[test]
    fn iid_is_near_full_length() {
        let n = 100_000;
        let e = ess(&ar1(0.0, n, 1)).unwrap().value / n as f64;
        assert!(e > 0.9 && e < 1.1, "{e}");
    }

    #[test]
    fn ar1_matches_closed_form() {
        let n = 100_000;
        let e = ess(&ar1(0.5, n, 2)).unwrap().value / n as f64;
        assert!((e - 1.0 / 3.0).abs() < 0.1 / 3.0, "{e}");
    }

    #[test]
    fn constant_chain_is_flagged() {
        let e = ess(&[3.0; 200]).unwrap();
        assert_eq!(e.value, 1.0);
        assert!(e.degenerate);
        assert!(ess(&[1.0; 10]).is_err());
    }

    #[test]
    fn autocorrelation_matches_direct_sum() {
        let x = ar1(0.7, 300, 3);
        let rho = autocorrelation(&x);
        let m = x.iter().sum::<f64>() / 300.0;
        let c0: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
        for k in [1, 5, 17] {
            let ck: f64 = x.iter().zip(&x[k..]).map(|(a, b)| (a - m) * (b - m)).sum();
            assert!((rho[k] - ck / c0).abs() < 1e-10);
        }
    }

    #[test]
    fn thinning_does_not_raise_ess() {
        let x = ar1(0.9, 60_000, 4);
        let thin: Vec<f64> = x.iter().step_by(2).copied().collect();
        let full = ess(&x).unwrap().value;
        let half = ess(&thin).unwrap().value;
        assert!(full >= 0.85 * half, "{full} vs {half}");
    }
}
