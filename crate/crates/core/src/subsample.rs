//! Pseudo-marginal MH with subsampled log-likelihood estimators.
//!
//! The log-likelihood is estimated from `m` items drawn with replacement,
//! optionally with a second-order Taylor control variate `q_i` whose total
//! `sum_i q_i(theta)` is available in `O(d^2)` from cached sums. Estimates
//! enter the target bias-corrected as `value - variance_hat / 2`.

use nalgebra::{DMatrix, DVector};

use crate::cluster::{kmeans, Clustering, DEFAULT_MAX_ITER};
use crate::error::{Error, Result};
use crate::mcmc::{
    log_accept_prob, metropolis_accept, ChainState, ChainStats, Kernel, Proposal, StepInfo,
};
use crate::models::{ItemDerivatives, ItemLikelihood};
use crate::param::ParamVec;
use crate::rng::RngStream;

/// `m` item indices, 0-based, each uniform over `0..N`.
pub fn draw_indices(n: usize, m: usize, rng: &mut RngStream) -> Vec<usize> {
    (0..m).map(|_| rng.index(n)).collect()
}

/// Keeps each entry with probability `rho` and otherwise redraws it
/// uniformly; returns the positions that were redrawn.
pub fn refresh_in_place(
    u: &mut [usize],
    n: usize,
    rho: f64,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho = {rho} outside [0, 1]")));
    }
    let mut changed = Vec::new();
    if rho == 1.0 {
        return Ok(changed);
    }
    for (k, slot) in u.iter_mut().enumerate() {
        if rho == 0.0 || rng.uniform() >= rho {
            *slot = rng.index(n);
            changed.push(k);
        }
    }
    Ok(changed)
}

pub fn refresh_indices(u: &[usize], n: usize, rho: f64, rng: &mut RngStream) -> Result<Vec<usize>> {
    let mut out = u.to_vec();
    refresh_in_place(&mut out, n, rho, rng)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveEstimate {
    /// `(1/m) sum_k l_{u_k}`, unbiased for the average log-likelihood.
    pub average: f64,
    /// `N` times the average.
    pub total: f64,
}

pub fn naive_estimate<M: ItemLikelihood + ?Sized>(
    model: &M,
    u: &[usize],
    theta: &[f64],
) -> Result<NaiveEstimate> {
    if u.is_empty() {
        return Err(Error::invalid("index vector is empty"));
    }
    let average = u.iter().map(|&i| model.item_loglik(i, theta)).sum::<f64>() / u.len() as f64;
    Ok(NaiveEstimate {
        average,
        total: model.n_items() as f64 * average,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikEstimate {
    pub value: f64,
    pub variance_hat: f64,
    pub corrected: f64,
    /// `m = 1`: the residual variance is undefined and `variance_hat` is 0.
    pub variance_undefined: bool,
}

impl LogLikEstimate {
    /// Estimate `sum_q + (N/m) sum_k r_k` with `variance_hat = (N^2/m) S^2(r)`.
    pub fn from_residuals(sum_q: f64, residuals: &[f64], n: usize) -> Self {
        let m = residuals.len() as f64;
        let n = n as f64;
        let mean = residuals.iter().sum::<f64>() / m;
        let value = sum_q + n * mean;
        let (variance_hat, variance_undefined) = if residuals.len() < 2 {
            (0.0, true)
        } else {
            let s2 = residuals
                .iter()
                .map(|r| (r - mean) * (r - mean))
                .sum::<f64>()
                / (m - 1.0);
            (n * n / m * s2, false)
        };
        Self {
            value,
            variance_hat,
            corrected: value - variance_hat / 2.0,
            variance_undefined,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expansion {
    /// Per-item expansion around `theta*`.
    Parameter,
    /// Expansion around `theta*` of a synthetic item at the item's cluster
    /// centroid.
    Data,
}

/// Expansion coefficients: value, gradient and Hessian of each surrogate at
/// `theta*`, plus their totals over all items.
#[derive(Debug, Clone)]
pub struct ControlVariateCache {
    pub mode: Expansion,
    pub anchor: Vec<f64>,
    n: usize,
    d: usize,
    /// Item (parameter mode) or cluster (data mode) coefficients.
    values: Vec<f64>,
    gradients: Vec<f64>,
    hessians: Vec<f64>,
    /// Item to coefficient row; `None` is the identity.
    assignment: Option<Vec<usize>>,
    sum_value: f64,
    sum_gradient: Vec<f64>,
    sum_hessian: DMatrix<f64>,
}

impl ControlVariateCache {
    /// Per-item expansion around `theta_star`; evaluates every item once.
    pub fn parameter<M: ItemLikelihood + ?Sized>(model: &M, theta_star: &[f64]) -> Result<Self> {
        let n = model.n_items();
        let coeffs = (0..n).map(|i| (i, model.item_derivatives(i, theta_star)));
        Self::assemble(
            Expansion::Parameter,
            n,
            theta_star,
            coeffs,
            None,
            vec![1.0; n],
        )
    }

    /// Cluster-level expansion around `theta_star`. `clustering` must
    /// partition the model's item feature vectors.
    pub fn data<M: ItemLikelihood + ?Sized>(
        model: &M,
        theta_star: &[f64],
        clustering: &Clustering,
    ) -> Result<Self> {
        let n = model.n_items();
        if clustering.assignment.len() != n {
            return Err(Error::invalid("clustering does not cover every item"));
        }
        let sizes: Vec<f64> = clustering
            .cluster_sizes()
            .into_iter()
            .map(|s| s as f64)
            .collect();
        let mut coeffs = Vec::with_capacity(clustering.k());
        for (k, c) in clustering.centroids.iter().enumerate() {
            let der = model
                .feature_derivatives(c, theta_star)
                .ok_or_else(|| Error::invalid("model cannot evaluate synthetic items"))?;
            coeffs.push((k, der));
        }
        Self::assemble(
            Expansion::Data,
            n,
            theta_star,
            coeffs.into_iter(),
            Some(clustering.assignment.clone()),
            sizes,
        )
    }

    fn assemble(
        mode: Expansion,
        n: usize,
        anchor: &[f64],
        coeffs: impl Iterator<Item = (usize, ItemDerivatives)>,
        assignment: Option<Vec<usize>>,
        multiplicity: Vec<f64>,
    ) -> Result<Self> {
        let d = anchor.len();
        let rows = multiplicity.len();
        let mut values = Vec::with_capacity(rows);
        let mut gradients = Vec::with_capacity(rows * d);
        let mut hessians = Vec::with_capacity(rows * d * d);
        let mut sum_value = 0.0;
        let mut sum_gradient = vec![0.0; d];
        let mut sum_hessian = DMatrix::zeros(d, d);
        for (k, der) in coeffs {
            let finite = der.value.is_finite()
                && der.gradient.iter().all(|g| g.is_finite())
                && der.hessian.iter().all(|h| h.is_finite());
            if !finite {
                return Err(Error::NonFiniteDerivative { item: k });
            }
            let w = multiplicity[k];
            sum_value += w * der.value;
            for (s, g) in sum_gradient.iter_mut().zip(&der.gradient) {
                *s += w * g;
            }
            sum_hessian += &der.hessian * w;
            values.push(der.value);
            gradients.extend_from_slice(&der.gradient);
            hessians.extend_from_slice(der.hessian.as_slice());
        }
        Ok(Self {
            mode,
            anchor: anchor.to_vec(),
            n,
            d,
            values,
            gradients,
            hessians,
            assignment,
            sum_value,
            sum_gradient,
            sum_hessian,
        })
    }

    fn row(&self, i: usize) -> usize {
        self.assignment.as_ref().map_or(i, |a| a[i])
    }

    fn offset(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().zip(&self.anchor).map(|(t, a)| t - a).collect()
    }

    fn q_at_offset(&self, k: usize, delta: &[f64]) -> f64 {
        let d = self.d;
        let g = &self.gradients[k * d..(k + 1) * d];
        let h = &self.hessians[k * d * d..(k + 1) * d * d];
        let mut lin = 0.0;
        let mut quad = 0.0;
        for a in 0..d {
            lin += g[a] * delta[a];
            let col = &h[a * d..(a + 1) * d];
            let hv: f64 = col.iter().zip(delta).map(|(x, y)| x * y).sum();
            quad += delta[a] * hv;
        }
        self.values[k] + lin + 0.5 * quad
    }

    /// Surrogate `q_i(theta)`.
    pub fn q(&self, i: usize, theta: &[f64]) -> f64 {
        self.q_at_offset(self.row(i), &self.offset(theta))
    }

    /// `sum_i q_i(theta)` from the cached totals.
    pub fn sum_q(&self, theta: &[f64]) -> f64 {
        let delta = self.offset(theta);
        let dv = DVector::from_column_slice(&delta);
        let lin: f64 = self
            .sum_gradient
            .iter()
            .zip(&delta)
            .map(|(g, x)| g * x)
            .sum();
        self.sum_value + lin + 0.5 * dv.dot(&(&self.sum_hessian * &dv))
    }

    pub fn n_items(&self) -> usize {
        self.n
    }
}

/// Clusters item feature vectors for the data expansion.
pub fn cluster_items<M: ItemLikelihood + ?Sized>(
    model: &M,
    k: usize,
    rng: &mut RngStream,
) -> Result<Clustering> {
    let features = (0..model.n_items())
        .map(|i| {
            model
                .item_features(i)
                .ok_or_else(|| Error::invalid("model does not expose item features"))
        })
        .collect::<Result<Vec<_>>>()?;
    kmeans(&features, k, rng, DEFAULT_MAX_ITER)
}

/// Control-variate estimate `sum q + (N/m) sum (l - q)`; with
/// `cache = None` the surrogate is zero and this is the naive estimator.
pub fn cv_estimate<M: ItemLikelihood + ?Sized>(
    model: &M,
    u: &[usize],
    cache: Option<&ControlVariateCache>,
    theta: &[f64],
) -> Result<LogLikEstimate> {
    if u.is_empty() {
        return Err(Error::invalid("index vector is empty"));
    }
    let residuals: Vec<f64> = u
        .iter()
        .map(|&i| residual(model, cache, i, theta))
        .collect();
    let sum_q = cache.map_or(0.0, |c| c.sum_q(theta));
    Ok(LogLikEstimate::from_residuals(
        sum_q,
        &residuals,
        model.n_items(),
    ))
}

fn residual<M: ItemLikelihood + ?Sized>(
    model: &M,
    cache: Option<&ControlVariateCache>,
    i: usize,
    theta: &[f64],
) -> f64 {
    let l = model.item_loglik(i, theta);
    cache.map_or(l, |c| l - c.q(i, theta))
}

/// Maximiser of the full log-likelihood by Newton's method with step
/// halving, started from `start`.
pub fn find_mle<M: ItemLikelihood + ?Sized>(
    model: &M,
    start: &[f64],
    max_iter: usize,
) -> Result<ParamVec> {
    let d = model.dim();
    let mut theta = start.to_vec();
    let mut current = model.full_loglik(&theta);
    for _ in 0..max_iter {
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        for i in 0..model.n_items() {
            let der = model.item_derivatives(i, &theta);
            grad += DVector::from_column_slice(&der.gradient);
            hess += der.hessian;
        }
        if grad.norm() < 1e-10 * (1.0 + current.abs()) {
            break;
        }
        let neg = -hess;
        let step = match neg.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => grad.clone() / (neg.norm().max(1.0)),
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a + t * s)
                .collect();
            let val = model.full_loglik(&cand);
            if val.is_finite() && val >= current {
                theta = cand;
                improved = val > current;
                current = val;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    ParamVec::new(theta)
}

/// Current index vector, per-position residuals at the current state, and
/// the current estimate.
#[derive(Debug, Clone)]
pub struct SubsampleAux {
    pub u: Vec<usize>,
    pub residuals: Vec<f64>,
    pub estimate: LogLikEstimate,
    pub log_prior: f64,
}

/// Pseudo-marginal kernel over the bias-corrected subsampled estimate.
///
/// Each iteration refreshes the index vector (keep-probability `rho`),
/// re-evaluates the current state's residuals only at redrawn positions,
/// evaluates all `m` positions at the proposal, and compares both states on
/// the shared index vector.
pub struct SubsampleKernel<'a, M: ?Sized> {
    pub model: &'a M,
    pub cache: Option<&'a ControlVariateCache>,
    pub m: usize,
    pub rho: f64,
    evaluations: usize,
    undefined_variance: usize,
}

impl<'a, M: ItemLikelihood + ?Sized> SubsampleKernel<'a, M> {
    pub fn new(
        model: &'a M,
        cache: Option<&'a ControlVariateCache>,
        m: usize,
        rho: f64,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("subsample size m must be at least 1"));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::invalid(format!("rho = {rho} outside [0, 1]")));
        }
        if cache.is_some_and(|c| c.n_items() != model.n_items()) {
            return Err(Error::invalid(
                "control-variate cache built for a different dataset",
            ));
        }
        Ok(Self {
            model,
            cache,
            m,
            rho,
            evaluations: 0,
            undefined_variance: 0,
        })
    }

    /// Item log-likelihood evaluations made by the kernel so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    fn sum_q(&self, theta: &[f64]) -> f64 {
        self.cache.map_or(0.0, |c| c.sum_q(theta))
    }

    fn target(&self, aux_prior: f64, est: &LogLikEstimate) -> f64 {
        aux_prior + est.corrected
    }
}

impl<M: ItemLikelihood + ?Sized> Kernel for SubsampleKernel<'_, M> {
    type Aux = SubsampleAux;

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn init(&mut self, theta: ParamVec, rng: &mut RngStream) -> Result<ChainState<SubsampleAux>> {
        let n = self.model.n_items();
        let u = draw_indices(n, self.m, rng);
        let residuals: Vec<f64> = u
            .iter()
            .map(|&i| residual(self.model, self.cache, i, &theta))
            .collect();
        self.evaluations += self.m;
        let estimate = LogLikEstimate::from_residuals(self.sum_q(&theta), &residuals, n);
        let log_prior = self.model.log_prior(&theta);
        let cached = if log_prior == f64::NEG_INFINITY {
            log_prior
        } else {
            self.target(log_prior, &estimate)
        };
        if cached.is_nan() {
            return Err(Error::NanTarget { iteration: 0 });
        }
        Ok(ChainState {
            theta,
            cached_log_target: cached,
            iteration: 0,
            aux: SubsampleAux {
                u,
                residuals,
                estimate,
                log_prior,
            },
        })
    }

    fn step<P: Proposal>(
        &mut self,
        state: &mut ChainState<SubsampleAux>,
        proposal: &P,
        rng: &mut RngStream,
    ) -> Result<StepInfo> {
        let n = self.model.n_items();
        let changed = refresh_in_place(&mut state.aux.u, n, self.rho, rng)?;
        for &k in &changed {
            let i = state.aux.u[k];
            state.aux.residuals[k] = residual(self.model, self.cache, i, &state.theta);
        }
        self.evaluations += changed.len();
        if !changed.is_empty() {
            state.aux.estimate =
                LogLikEstimate::from_residuals(self.sum_q(&state.theta), &state.aux.residuals, n);
            if state.aux.log_prior > f64::NEG_INFINITY {
                state.cached_log_target = self.target(state.aux.log_prior, &state.aux.estimate);
            }
        }

        let omega = proposal.propose(&state.theta, rng);
        if !omega.is_finite() {
            return Ok(StepInfo::rejected_nonfinite());
        }
        let log_prior = self.model.log_prior(&omega);
        if log_prior == f64::NEG_INFINITY {
            return Ok(StepInfo::rejected_outside_support());
        }
        let residuals: Vec<f64> = state
            .aux
            .u
            .iter()
            .map(|&i| residual(self.model, self.cache, i, &omega))
            .collect();
        self.evaluations += self.m;
        let estimate = LogLikEstimate::from_residuals(self.sum_q(&omega), &residuals, n);
        self.undefined_variance += usize::from(estimate.variance_undefined);
        let proposed = self.target(log_prior, &estimate);
        if proposed.is_nan() {
            return Err(Error::NanTarget {
                iteration: state.iteration + 1,
            });
        }
        let log_alpha = log_accept_prob(
            state.cached_log_target,
            proposed,
            proposal.log_correction(&state.theta, &omega),
        );
        let accepted = metropolis_accept(log_alpha, rng);
        if accepted {
            state.theta = omega;
            state.cached_log_target = proposed;
            state.aux.residuals = residuals;
            state.aux.estimate = estimate;
            state.aux.log_prior = log_prior;
        }
        Ok(StepInfo {
            accepted,
            log_alpha,
            nonfinite_proposal: false,
            degenerate: false,
        })
    }

    fn record_stats(&self, stats: &mut ChainStats) {
        stats.likelihood_evaluations += self.evaluations;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::toy::GaussianMeanModel;
    use crate::models::{generate_logistic, LogisticModel};

    fn logistic(n: usize, seed: u64) -> LogisticModel {
        generate_logistic(n, &[-2.0, 2.0], &mut RngStream::new(seed, 0)).unwrap()
    }

    fn all_index_vectors(n: usize, m: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..m {
            out = out
                .into_iter()
                .flat_map(|v| {
                    (0..n).map(move |i| {
                        let mut w = v.clone();
                        w.push(i);
                        w
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn naive_single_item_and_constant() {
        let m = logistic(1, 1);
        let est = naive_estimate(&m, &[0], &[0.4, 0.1]).unwrap();
        assert_eq!(est.total, m.item_loglik(0, &[0.4, 0.1]));
        let g = GaussianMeanModel::new(vec![1.0; 6], 1, 1.0, None).unwrap();
        let full = g.full_loglik(&[1.0]);
        let e = naive_estimate(&g, &[0, 3, 3], &[1.0]).unwrap();
        assert!((e.total - full).abs() < 1e-12);
    }

    #[test]
    fn naive_enumeration_is_unbiased() {
        let m = logistic(4, 2);
        let theta = [0.3, -0.7];
        let all = all_index_vectors(4, 2);
        assert_eq!(all.len(), 16);
        let mean = all
            .iter()
            .map(|u| naive_estimate(&m, u, &theta).unwrap().total)
            .sum::<f64>()
            / 16.0;
        assert!((mean - m.full_loglik(&theta)).abs() < 1e-12);
    }

    #[test]
    fn quadratic_surrogate_is_exact() {
        let g = GaussianMeanModel::simulate(
            30,
            &[1.0, -1.0],
            2.0,
            Some(3.0),
            &mut RngStream::new(3, 0),
        )
        .unwrap();
        let cache = ControlVariateCache::parameter(&g, &[0.2, 0.5]).unwrap();
        let theta = [2.0, -3.0];
        for i in 0..30 {
            assert!((cache.q(i, &theta) - g.item_loglik(i, &theta)).abs() < 1e-10);
        }
        assert!((cache.sum_q(&theta) - g.full_loglik(&theta)).abs() < 1e-9);
        let mut rng = RngStream::new(4, 0);
        for _ in 0..20 {
            let u = draw_indices(30, 5, &mut rng);
            let est = cv_estimate(&g, &u, Some(&cache), &theta).unwrap();
            assert!(est.variance_hat < 1e-18);
            assert!((est.value - g.full_loglik(&theta)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_offset_reproduces_anchor() {
        let m = logistic(20, 5);
        let anchor = [-1.0, 1.5];
        let cache = ControlVariateCache::parameter(&m, &anchor).unwrap();
        for i in 0..20 {
            assert!((cache.q(i, &anchor) - m.item_loglik(i, &anchor)).abs() < 1e-14);
        }
    }

    #[test]
    fn taylor_error_is_third_order() {
        let m = logistic(1, 6);
        let anchor = [-0.5, 0.8];
        let cache = ControlVariateCache::parameter(&m, &anchor).unwrap();
        let dir = [0.6, -0.8];
        let err = |h: f64| {
            let t = [anchor[0] + h * dir[0], anchor[1] + h * dir[1]];
            (cache.q(0, &t) - m.item_loglik(0, &t)).abs()
        };
        let ratio = err(0.2) / err(0.1);
        assert!(ratio > 6.0 && ratio < 10.0, "{ratio}");
    }

    #[test]
    fn full_index_set_telescopes() {
        let m = logistic(25, 7);
        let cache = ControlVariateCache::parameter(&m, &[-2.0, 2.0]).unwrap();
        let u: Vec<usize> = (0..25).collect();
        let theta = [0.0, 0.5];
        let est = cv_estimate(&m, &u, Some(&cache), &theta).unwrap();
        assert!((est.value - m.full_loglik(&theta)).abs() < 1e-10);
    }

    #[test]
    fn cv_enumeration_is_unbiased() {
        let m = logistic(4, 8);
        let theta = [0.7, -1.2];
        for cache in [
            ControlVariateCache::parameter(&m, &[-2.0, 2.0]).unwrap(),
            ControlVariateCache::data(
                &m,
                &[-2.0, 2.0],
                &cluster_items(&m, 2, &mut RngStream::new(1, 0)).unwrap(),
            )
            .unwrap(),
        ] {
            let all = all_index_vectors(4, 2);
            let mean = all
                .iter()
                .map(|u| cv_estimate(&m, u, Some(&cache), &theta).unwrap().value)
                .sum::<f64>()
                / 16.0;
            assert!((mean - m.full_loglik(&theta)).abs() < 1e-12);
        }
    }

    #[test]
    fn data_expansion_totals_match_items() {
        let m = logistic(300, 9);
        let cl = cluster_items(&m, 5, &mut RngStream::new(2, 0)).unwrap();
        let cache = ControlVariateCache::data(&m, &[-1.5, 1.5], &cl).unwrap();
        let theta = [-1.0, 2.5];
        let direct: f64 = (0..300).map(|i| cache.q(i, &theta)).sum();
        assert!((direct - cache.sum_q(&theta)).abs() < 1e-8 * direct.abs());
    }

    #[test]
    fn cv_reduces_variance_near_mle() {
        let m = logistic(1000, 10);
        let mle = find_mle(&m, &[0.0, 0.0], 50).unwrap();
        let cache = ControlVariateCache::parameter(&m, &mle).unwrap();
        let theta = [mle[0] + 0.05, mle[1] - 0.05];
        let mut rng = RngStream::new(11, 0);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for _ in 0..10_000 {
            let u = draw_indices(1000, 20, &mut rng);
            a.push(cv_estimate(&m, &u, Some(&cache), &theta).unwrap().value);
            b.push(naive_estimate(&m, &u, &theta).unwrap().total);
        }
        let var = |x: &[f64]| {
            let mu = x.iter().sum::<f64>() / x.len() as f64;
            x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (x.len() - 1) as f64
        };
        assert!(var(&a) <= var(&b));
    }

    #[test]
    fn refresh_edge_cases_and_rate() {
        let mut rng = RngStream::new(12, 0);
        let u = draw_indices(50, 100, &mut rng);
        assert_eq!(refresh_indices(&u, 50, 1.0, &mut rng).unwrap(), u);
        assert!(refresh_indices(&u, 50, 1.5, &mut rng).is_err());
        let mut v = u.clone();
        let changed = refresh_in_place(&mut v, 50, 0.0, &mut rng).unwrap();
        assert_eq!(changed.len(), 100);
        let rho = 0.99;
        let trials = 20_000;
        let mut total = 0;
        for _ in 0..trials {
            total += refresh_in_place(&mut v, 50, rho, &mut rng).unwrap().len();
        }
        let p = 1.0 - rho;
        let n = (trials * 100) as f64;
        let rate = total as f64 / n;
        assert!((rate - p).abs() < 3.0 * (p * (1.0 - p) / n).sqrt());
    }

    #[test]
    fn refresh_keeps_indices_uniform() {
        let mut rng = RngStream::new(13, 0);
        let n = 10;
        let mut u = draw_indices(n, 20, &mut rng);
        let mut counts = vec![0usize; n];
        for _ in 0..5000 {
            refresh_in_place(&mut u, n, 0.7, &mut rng).unwrap();
            for &i in &u {
                counts[i] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let e = total as f64 / n as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 60.0, "{chi2}");
    }

    #[test]
    fn single_index_flags_variance() {
        let m = logistic(10, 14);
        let est = cv_estimate(&m, &[3], None, &[0.0, 0.0]).unwrap();
        assert!(est.variance_undefined);
        assert_eq!(est.variance_hat, 0.0);
        assert_eq!(est.corrected, est.value);
    }

    #[test]
    fn mle_zeroes_gradient() {
        let m = logistic(500, 15);
        let mle = find_mle(&m, &[0.0, 0.0], 50).unwrap();
        let g: Vec<f64> = (0..2)
            .map(|a| {
                (0..500)
                    .map(|i| m.item_derivatives(i, &mle).gradient[a])
                    .sum()
            })
            .collect();
        assert!(g.iter().all(|v| v.abs() < 1e-6));
    }
}
