use super::stats::{acf_sum, quantile_sorted};
use super::Simulator;
use crate::error::{Error, Result};
use crate::param::ParamVec;
use crate::rng::RngStream;

pub const SV_THETA_TRUE: [f64; 3] = [0.95, -2.0, -1.0];

/// Stochastic volatility with latent AR(1) log-variance:
/// `x_i = theta_1 x_{i-1} + v_i`, `y_i = exp((theta_2 + e^theta_3 x_i) / 2) w_i`.
/// Priors: `theta_1 ~ U[0,1]`, `theta_2, theta_3 ~ N(0,1)`.
#[derive(Debug, Clone)]
pub struct SvModel {
    pub n: usize,
}

impl SvModel {
    pub fn new(n: usize) -> Result<Self> {
        if n < 7 {
            return Err(Error::invalid("SV series needs N >= 7 for the summaries"));
        }
        Ok(Self { n })
    }
}

/// Simulates `y_1..y_N`. Requires `|theta_1| < 1`.
pub fn sv_simulate(theta: &[f64], n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    simulate_path(theta, n, rng, |_| {})
}

fn simulate_path(
    theta: &[f64],
    n: usize,
    rng: &mut RngStream,
    mut latent: impl FnMut(f64),
) -> Result<Vec<f64>> {
    if theta.len() != 3 {
        return Err(Error::invalid("SV parameter has three components"));
    }
    let (phi, mu, log_tau) = (theta[0], theta[1], theta[2]);
    if phi.abs() >= 1.0 || !phi.is_finite() {
        return Err(Error::invalid(format!("SV needs |theta_1| < 1, got {phi}")));
    }
    let tau = log_tau.exp();
    let mut x = rng.normal() / (1.0 - phi * phi).sqrt();
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            x = phi * x + rng.normal();
        }
        latent(x);
        y.push((0.5 * (mu + tau * x)).exp() * rng.normal());
    }
    Ok(y)
}

/// Six summaries of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryVector {
    pub s: [f64; 6],
    /// `y^2` was constant, so autocorrelation sums are 0 by convention.
    pub degenerate: bool,
}

/// Mean and standard deviation of `y^2`, the sum of its first five
/// autocorrelations, and the same sum for the indicator series
/// `1{y_i^2 < quantile(y^2, tau)}` at `tau = 0.1, 0.5, 0.9`.
pub fn sv_summaries(y: &[f64]) -> Result<SummaryVector> {
    if y.len() < 7 {
        return Err(Error::invalid("summaries need at least 7 observations"));
    }
    let y2: Vec<f64> = y.iter().map(|v| v * v).collect();
    let n = y2.len() as f64;
    let mean = y2.iter().sum::<f64>() / n;
    let var = y2.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let (c3, degenerate) = acf_sum(&y2, 1..=5);
    let mut sorted = y2.clone();
    sorted.sort_by(f64::total_cmp);
    let mut s = [mean, var.sqrt(), c3, 0.0, 0.0, 0.0];
    let mut b = vec![0.0; y2.len()];
    for (slot, tau) in [0.1, 0.5, 0.9].into_iter().enumerate() {
        let q = quantile_sorted(&sorted, tau);
        for (bi, v) in b.iter_mut().zip(&y2) {
            *bi = f64::from(u8::from(*v < q));
        }
        s[3 + slot] = acf_sum(&b, 1..=5).0;
    }
    Ok(SummaryVector { s, degenerate })
}

impl Simulator for SvModel {
    type Data = Vec<f64>;

    fn dim(&self) -> usize {
        3
    }

    fn summary_dim(&self) -> usize {
        6
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        if !(0.0..1.0).contains(&theta[0]) {
            return f64::NEG_INFINITY;
        }
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        -0.5 * (theta[1] * theta[1] + theta[2] * theta[2]) - ln_2pi
    }

    fn sample_prior(&self, rng: &mut RngStream) -> ParamVec {
        let t = vec![rng.uniform(), rng.normal(), rng.normal()];
        ParamVec::from_unchecked(t)
    }

    fn prior_mean(&self) -> ParamVec {
        ParamVec::from_unchecked(vec![0.5, 0.0, 0.0])
    }

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        sv_simulate(theta, self.n, rng)
    }

    fn summarize(&self, data: &Vec<f64>) -> Vec<f64> {
        sv_summaries(data)
            .map(|s| s.s.to_vec())
            .unwrap_or_else(|_| vec![0.0; 6])
    }
}
