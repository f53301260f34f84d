//! Benchmark models and the two interfaces samplers consume: per-item
//! likelihoods ([`ItemLikelihood`]) and simulators ([`Simulator`]).

mod logistic;
pub mod stats;
mod sv;
pub mod toy;

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;

use crate::error::Result;
use crate::param::ParamVec;
use crate::rng::RngStream;

pub use logistic::{
    generate_logistic, log_sigmoid, sigmoid, softplus, LogisticModel, PRIOR_VARIANCE,
};
pub use sv::{sv_simulate, sv_summaries, SummaryVector, SvModel, SV_THETA_TRUE};

/// Value, gradient and Hessian of one log-likelihood term.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemDerivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

/// Log-likelihood that factorises over `N` independent items.
pub trait ItemLikelihood: Sync {
    fn n_items(&self) -> usize;

    fn dim(&self) -> usize;

    /// `l_i(theta) = log f(y_i | theta)`.
    fn item_loglik(&self, i: usize, theta: &[f64]) -> f64;

    fn item_derivatives(&self, i: usize, theta: &[f64]) -> ItemDerivatives;

    fn log_prior(&self, theta: &[f64]) -> f64;

    fn prior_mean(&self) -> ParamVec {
        ParamVec::zeros(self.dim())
    }

    fn full_loglik(&self, theta: &[f64]) -> f64 {
        (0..self.n_items())
            .map(|i| self.item_loglik(i, theta))
            .sum()
    }

    fn log_posterior(&self, theta: &[f64]) -> f64 {
        let lp = self.log_prior(theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + self.full_loglik(theta)
    }

    /// Vector through which item `i` enters the likelihood, if the model
    /// can evaluate a synthetic item at an arbitrary such vector.
    fn item_features(&self, _i: usize) -> Option<Vec<f64>> {
        None
    }

    /// Derivatives of the term a synthetic item with `features` would
    /// contribute.
    fn feature_derivatives(&self, _features: &[f64], _theta: &[f64]) -> Option<ItemDerivatives> {
        None
    }
}

/// Model known only through simulation.
pub trait Simulator: Sync {
    type Data;

    fn dim(&self) -> usize;

    fn summary_dim(&self) -> usize;

    fn log_prior(&self, theta: &[f64]) -> f64;

    fn in_support(&self, theta: &[f64]) -> bool {
        self.log_prior(theta) > f64::NEG_INFINITY
    }

    fn sample_prior(&self, rng: &mut RngStream) -> ParamVec;

    fn prior_mean(&self) -> ParamVec;

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Self::Data>;

    fn summarize(&self, data: &Self::Data) -> Vec<f64>;

    fn simulate_summary(&self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        let data = self.simulate(theta, rng)?;
        Ok(self.summarize(&data))
    }
}

/// Wraps an [`ItemLikelihood`] and counts item evaluations.
pub struct CountingModel<'a, M: ?Sized> {
    inner: &'a M,
    evaluations: AtomicUsize,
}

impl<'a, M: ItemLikelihood + ?Sized> CountingModel<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        Self {
            inner,
            evaluations: AtomicUsize::new(0),
        }
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
    }
}

impl<M: ItemLikelihood + ?Sized> ItemLikelihood for CountingModel<'_, M> {
    fn n_items(&self) -> usize {
        self.inner.n_items()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn item_loglik(&self, i: usize, theta: &[f64]) -> f64 {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.inner.item_loglik(i, theta)
    }

    fn item_derivatives(&self, i: usize, theta: &[f64]) -> ItemDerivatives {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.inner.item_derivatives(i, theta)
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.inner.log_prior(theta)
    }

    fn prior_mean(&self) -> ParamVec {
        self.inner.prior_mean()
    }

    fn item_features(&self, i: usize) -> Option<Vec<f64>> {
        self.inner.item_features(i)
    }

    fn feature_derivatives(&self, features: &[f64], theta: &[f64]) -> Option<ItemDerivatives> {
        self.inner.feature_derivatives(features, theta)
    }
}

/// Wraps a [`Simulator`] and counts `simulate` calls.
pub struct CountingSimulator<'a, S: ?Sized> {
    inner: &'a S,
    calls: AtomicUsize,
}

impl<'a, S: Simulator + ?Sized> CountingSimulator<'a, S> {
    pub fn new(inner: &'a S) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<S: Simulator + ?Sized> Simulator for CountingSimulator<'_, S> {
    type Data = S::Data;

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn summary_dim(&self) -> usize {
        self.inner.summary_dim()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.inner.log_prior(theta)
    }

    fn in_support(&self, theta: &[f64]) -> bool {
        self.inner.in_support(theta)
    }

    fn sample_prior(&self, rng: &mut RngStream) -> ParamVec {
        self.inner.sample_prior(rng)
    }

    fn prior_mean(&self) -> ParamVec {
        self.inner.prior_mean()
    }

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Self::Data> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.simulate(theta, rng)
    }

    fn summarize(&self, data: &Self::Data) -> Vec<f64> {
        self.inner.summarize(data)
    }
}
