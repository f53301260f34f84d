//! Sensitivity-sampled coresets for logistic regression.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;

use crate::cluster::{kmeans, sq_dist, Clustering, DEFAULT_MAX_ITER};
use crate::error::{Error, Result};
use crate::mcmc::{run_chain, FnTarget, LogTarget, RunConfig};
use crate::models::{generate_logistic, ItemLikelihood, LogisticModel};
use crate::param::ParamVec;
use crate::rng::RngStream;
use crate::subsample::find_mle;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radius {
    pub r: f64,
    /// Every cluster had zero spread and `r` fell back to 1.
    pub fallback: bool,
}

/// `R = sqrt(mean_k within_spread_k)`.
pub fn compute_radius(clustering: &Clustering) -> Radius {
    let k = clustering.within_spread.len().max(1) as f64;
    let r = (clustering.within_spread.iter().sum::<f64>() / k).sqrt();
    if r > 0.0 && r.is_finite() {
        Radius { r, fallback: false }
    } else {
        log::warn!("zero within-cluster spread; using radius 1");
        Radius {
            r: 1.0,
            fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityProfile {
    pub sigma_i: Vec<f64>,
    pub sigma: f64,
    pub mean_sensitivity: f64,
    pub radius: f64,
}

/// `sigma_i = N / (1 + sum_k |G_k \ {i}| exp(-R ||z_i - c_k||))`.
pub fn sensitivity_bounds(
    z: &[Vec<f64>],
    clustering: &Clustering,
    radius: f64,
) -> Result<SensitivityProfile> {
    let n = z.len();
    if n == 0 || clustering.assignment.len() != n {
        return Err(Error::invalid("clustering does not match the vectors"));
    }
    if radius <= 0.0 || !radius.is_finite() {
        return Err(Error::invalid("radius must be positive"));
    }
    let sizes = clustering.cluster_sizes();
    let sigma_i: Vec<f64> = z
        .iter()
        .enumerate()
        .map(|(i, zi)| {
            let own = clustering.assignment[i];
            let denom: f64 = clustering
                .centroids
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let others = sizes[k] - usize::from(k == own);
                    others as f64 * (-radius * sq_dist(zi, c).sqrt()).exp()
                })
                .sum();
            n as f64 / (1.0 + denom)
        })
        .collect();
    let sigma = sigma_i.iter().sum::<f64>();
    Ok(SensitivityProfile {
        mean_sensitivity: sigma / n as f64,
        sigma,
        sigma_i,
        radius,
    })
}

/// Multinomial counts `M_i` and weights `W_i = (sigma / sigma_i)(M_i / M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coreset {
    pub weights: Vec<f64>,
    pub counts: Vec<usize>,
    pub m: usize,
    pub support: Vec<usize>,
}

impl Coreset {
    /// Weight 1 on every item.
    pub fn full(n: usize) -> Self {
        Self {
            weights: vec![1.0; n],
            counts: vec![1; n],
            m: n,
            support: (0..n).collect(),
        }
    }

    pub fn from_counts(profile: &SensitivityProfile, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != profile.sigma_i.len() {
            return Err(Error::invalid("count vector length differs from N"));
        }
        let m: usize = counts.iter().sum();
        if m == 0 {
            return Err(Error::invalid("coreset size must be at least 1"));
        }
        let weights: Vec<f64> = counts
            .iter()
            .zip(&profile.sigma_i)
            .map(|(&c, &s)| (profile.sigma / s) * (c as f64 / m as f64))
            .collect();
        let support = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
        Ok(Self {
            weights,
            counts,
            m,
            support,
        })
    }
}

/// Draws `(M_1..M_N) ~ Multinomial(M, sigma_i / sigma)`.
pub fn sample_coreset(
    profile: &SensitivityProfile,
    m: usize,
    rng: &mut RngStream,
) -> Result<Coreset> {
    if m == 0 {
        return Err(Error::invalid("coreset size must be at least 1"));
    }
    let dist = WeightedIndex::new(&profile.sigma_i).map_err(|e| Error::invalid(e.to_string()))?;
    let mut counts = vec![0usize; profile.sigma_i.len()];
    for _ in 0..m {
        counts[dist.sample(rng)] += 1;
    }
    Coreset::from_counts(profile, counts)
}

/// `sum_{i in support} W_i l_i(theta)`.
pub fn coreset_loglik<M: ItemLikelihood + ?Sized>(
    model: &M,
    coreset: &Coreset,
    theta: &[f64],
) -> f64 {
    coreset
        .support
        .iter()
        .map(|&i| coreset.weights[i] * model.item_loglik(i, theta))
        .sum()
}

/// `max_theta |Lambda(theta) - l(theta)| / |max_theta l(theta)|` over a grid.
pub fn discrepancy_report<M: ItemLikelihood + ?Sized>(
    model: &M,
    coreset: &Coreset,
    grid: &[ParamVec],
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::invalid("discrepancy grid is empty"));
    }
    let mut worst = 0.0f64;
    let mut best_full = f64::NEG_INFINITY;
    for theta in grid {
        let full = model.full_loglik(theta);
        let approx = coreset_loglik(model, coreset, theta);
        worst = worst.max((approx - full).abs());
        best_full = best_full.max(full);
    }
    Ok(worst / best_full.abs())
}

/// Clusters the label-signed covariates of `model` into `k` groups, bounds
/// sensitivities and draws a coreset of size `m`.
pub fn logistic_coreset(
    model: &LogisticModel,
    k: usize,
    m: usize,
    rng: &mut RngStream,
) -> Result<(Coreset, SensitivityProfile)> {
    let d = model.dim();
    let z: Vec<Vec<f64>> = model
        .signed_covariates()
        .chunks_exact(d)
        .map(<[f64]>::to_vec)
        .collect();
    let clustering = kmeans(&z, k, rng, DEFAULT_MAX_ITER)?;
    let radius = compute_radius(&clustering);
    let profile = sensitivity_bounds(&z, &clustering, radius.r)?;
    let coreset = sample_coreset(&profile, m, rng)?;
    Ok((coreset, profile))
}

/// Settings for the replicated discrepancy study.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyStudy {
    pub k: usize,
    pub fractions: Vec<f64>,
    pub replicates: usize,
    /// Full-data chain that supplies the theta grid.
    pub grid_iterations: usize,
    pub grid_burn_in: usize,
    pub grid_points: usize,
    pub seed: u64,
}

impl Default for DiscrepancyStudy {
    fn default() -> Self {
        Self {
            k: 4,
            fractions: vec![0.5, 0.1, 0.05, 0.01],
            replicates: 5,
            grid_iterations: 6000,
            grid_burn_in: 2000,
            grid_points: 200,
            seed: 1,
        }
    }
}

/// Mean over replicates of [`discrepancy_report`] for each fraction, on
/// simulated logistic data of size `n`. The grid is evenly thinned from a
/// full-data adaptive RWM chain started at the MLE.
pub fn discrepancy_study(
    n: usize,
    theta_true: &[f64],
    study: &DiscrepancyStudy,
) -> Result<Vec<f64>> {
    if study.replicates == 0 || study.grid_points == 0 {
        return Err(Error::invalid("study needs replicates and grid points"));
    }
    if study.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::invalid("fractions must lie in (0, 1]"));
    }
    let d = theta_true.len();
    let per_rep = (0..study.replicates)
        .into_par_iter()
        .map(|r| {
            let master = RngStream::new(study.seed, r as u64);
            let model = generate_logistic(n, theta_true, &mut master.substream(0))?;
            let start = find_mle(&model, &vec![0.0; d], 100)?;
            let cfg = RunConfig::new(study.grid_iterations, study.grid_burn_in, 100);
            let target = FnTarget::new(d, |t: &[f64]| model.log_posterior(t));
            let chain = run_chain(start, target, &cfg, 0.05, &mut master.substream(1))?;
            let draws = chain.retained_params();
            let step = (draws.len() / study.grid_points).max(1);
            let grid: Vec<ParamVec> = draws
                .into_iter()
                .step_by(step)
                .take(study.grid_points)
                .collect();
            study
                .fractions
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let m = ((f * n as f64).round() as usize).max(1);
                    let (coreset, _) =
                        logistic_coreset(&model, study.k, m, &mut master.substream(2 + i as u64))?;
                    discrepancy_report(&model, &coreset, &grid)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..study.fractions.len())
        .map(|i| per_rep.iter().map(|v| v[i]).sum::<f64>() / study.replicates as f64)
        .collect())
}

/// Log-prior plus coreset log-likelihood.
pub struct CoresetTarget<'a, M: ?Sized> {
    pub model: &'a M,
    pub coreset: &'a Coreset,
}

impl<M: ItemLikelihood + ?Sized> LogTarget for CoresetTarget<'_, M> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn evaluate(&mut self, theta: &ParamVec, _rng: &mut RngStream) -> f64 {
        let lp = self.model.log_prior(theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + coreset_loglik(self.model, self.coreset, theta)
    }
}
