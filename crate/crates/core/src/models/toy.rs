//! Small models with closed-form posteriors, used as test oracles.

use nalgebra::DMatrix;

use super::{ItemDerivatives, ItemLikelihood, Simulator};
use crate::error::{Error, Result};
use crate::param::ParamVec;
use crate::rng::RngStream;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `y_i ~ N(theta, sigma2 I)` in `d` dimensions with prior
/// `N(prior_mean, prior_var I)` or a flat prior.
#[derive(Debug, Clone)]
pub struct GaussianMeanModel {
    d: usize,
    obs: Vec<f64>,
    pub noise_var: f64,
    pub prior_mean: Vec<f64>,
    /// `None` is the improper flat prior.
    pub prior_var: Option<f64>,
}

impl GaussianMeanModel {
    pub fn new(obs: Vec<f64>, d: usize, noise_var: f64, prior_var: Option<f64>) -> Result<Self> {
        if d == 0 || obs.is_empty() || !obs.len().is_multiple_of(d) {
            return Err(Error::invalid(
                "observations must be a non-empty N x d block",
            ));
        }
        if noise_var <= 0.0 || prior_var.is_some_and(|v| v <= 0.0) {
            return Err(Error::invalid("variances must be positive"));
        }
        Ok(Self {
            d,
            obs,
            noise_var,
            prior_mean: vec![0.0; d],
            prior_var,
        })
    }

    pub fn simulate(
        n: usize,
        theta: &[f64],
        noise_var: f64,
        prior_var: Option<f64>,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let sd = noise_var.sqrt();
        let obs = (0..n)
            .flat_map(|_| {
                theta
                    .iter()
                    .map(|t| t + sd * rng.normal())
                    .collect::<Vec<_>>()
            })
            .collect();
        Self::new(obs, theta.len(), noise_var, prior_var)
    }

    pub fn observations(&self) -> &[f64] {
        &self.obs
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.obs[i * self.d..(i + 1) * self.d]
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let obs = indices
            .iter()
            .flat_map(|&i| self.item(i).to_vec())
            .collect();
        Self {
            obs,
            ..self.clone()
        }
    }

    /// Posterior mean and (isotropic) variance.
    pub fn posterior(&self) -> (Vec<f64>, f64) {
        let n = self.n_items() as f64;
        let prec0 = self.prior_var.map_or(0.0, |v| 1.0 / v);
        let prec = n / self.noise_var + prec0;
        let mean = (0..self.d)
            .map(|s| {
                let sum: f64 = self.obs.iter().skip(s).step_by(self.d).sum();
                (sum / self.noise_var + prec0 * self.prior_mean[s]) / prec
            })
            .collect();
        (mean, 1.0 / prec)
    }

    fn term(&self, f: &[f64], theta: &[f64]) -> ItemDerivatives {
        let d = self.d;
        let r: Vec<f64> = f.iter().zip(theta).map(|(a, b)| a - b).collect();
        let sq: f64 = r.iter().map(|v| v * v).sum();
        ItemDerivatives {
            value: -0.5 * sq / self.noise_var - 0.5 * d as f64 * (LN_2PI + self.noise_var.ln()),
            gradient: r.iter().map(|v| v / self.noise_var).collect(),
            hessian: DMatrix::identity(d, d) * (-1.0 / self.noise_var),
        }
    }
}

impl ItemLikelihood for GaussianMeanModel {
    fn n_items(&self) -> usize {
        self.obs.len() / self.d
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn item_loglik(&self, i: usize, theta: &[f64]) -> f64 {
        let sq: f64 = self
            .item(i)
            .iter()
            .zip(theta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        -0.5 * sq / self.noise_var - 0.5 * self.d as f64 * (LN_2PI + self.noise_var.ln())
    }

    fn item_derivatives(&self, i: usize, theta: &[f64]) -> ItemDerivatives {
        self.term(self.item(i), theta)
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        match self.prior_var {
            None => 0.0,
            Some(v) => {
                let sq: f64 = theta
                    .iter()
                    .zip(&self.prior_mean)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                -0.5 * sq / v - 0.5 * self.d as f64 * (LN_2PI + v.ln())
            }
        }
    }

    fn prior_mean(&self) -> ParamVec {
        ParamVec::from_unchecked(self.prior_mean.clone())
    }

    fn item_features(&self, i: usize) -> Option<Vec<f64>> {
        Some(self.item(i).to_vec())
    }

    fn feature_derivatives(&self, features: &[f64], theta: &[f64]) -> Option<ItemDerivatives> {
        Some(self.term(features, theta))
    }
}

/// Discrete-outcome toy: `theta ~ U[0, k)` selects class `floor(theta)`,
/// and `y | theta ~ Bernoulli(p[class])`. The summary is `y` itself.
#[derive(Debug, Clone)]
pub struct BernoulliToy {
    pub p: Vec<f64>,
}

impl BernoulliToy {
    pub fn class(theta: f64) -> usize {
        theta.floor() as usize
    }

    /// Exact posterior class probabilities given `y0`.
    pub fn posterior(&self, y0: f64) -> Vec<f64> {
        let w: Vec<f64> = self
            .p
            .iter()
            .map(|&p| if y0 == 1.0 { p } else { 1.0 - p })
            .collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }
}

impl Simulator for BernoulliToy {
    type Data = f64;

    fn dim(&self) -> usize {
        1
    }

    fn summary_dim(&self) -> usize {
        1
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let k = self.p.len() as f64;
        if (0.0..k).contains(&theta[0]) {
            -k.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn sample_prior(&self, rng: &mut RngStream) -> ParamVec {
        ParamVec::from_unchecked(vec![rng.uniform() * self.p.len() as f64])
    }

    fn prior_mean(&self) -> ParamVec {
        ParamVec::from_unchecked(vec![self.p.len() as f64 / 2.0])
    }

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<f64> {
        let k = Self::class(theta[0]);
        let p = *self
            .p
            .get(k)
            .ok_or_else(|| Error::Simulator(format!("theta {} outside support", theta[0])))?;
        Ok(f64::from(u8::from(rng.uniform() < p)))
    }

    fn summarize(&self, data: &f64) -> Vec<f64> {
        vec![*data]
    }
}

/// `y_1..y_n ~ N(theta, 1)` with summary `mean(y)`, which is exactly
/// `N(theta, 1/n)`. Prior `N(0, prior_var)`.
#[derive(Debug, Clone)]
pub struct GaussianSummaryToy {
    pub n: usize,
    pub prior_var: f64,
}

impl GaussianSummaryToy {
    /// Posterior under the exact Gaussian likelihood of the summary.
    pub fn posterior(&self, s0: f64) -> (f64, f64) {
        let prec = self.n as f64 + 1.0 / self.prior_var;
        (self.n as f64 * s0 / prec, 1.0 / prec)
    }
}

impl Simulator for GaussianSummaryToy {
    type Data = Vec<f64>;

    fn dim(&self) -> usize {
        1
    }

    fn summary_dim(&self) -> usize {
        1
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        -0.5 * theta[0] * theta[0] / self.prior_var - 0.5 * (LN_2PI + self.prior_var.ln())
    }

    fn sample_prior(&self, rng: &mut RngStream) -> ParamVec {
        ParamVec::from_unchecked(vec![self.prior_var.sqrt() * rng.normal()])
    }

    fn prior_mean(&self) -> ParamVec {
        ParamVec::zeros(1)
    }

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        Ok((0..self.n).map(|_| theta[0] + rng.normal()).collect())
    }

    fn summarize(&self, data: &Vec<f64>) -> Vec<f64> {
        vec![data.iter().sum::<f64>() / data.len() as f64]
    }
}
