//! Divide-and-conquer sampling: independent chains on batch subposteriors,
//! recombined by inverse-covariance weighted averaging.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cputime::CpuTimer;
use crate::data::Partition;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_trace_jitter, sample_covariance};
use crate::mcmc::{run_chain, Chain, ChainStats, LogTarget, RunConfig};
use crate::models::ItemLikelihood;
use crate::param::ParamVec;
use crate::rng::RngStream;

/// Relative diagonal jitter applied to batch covariances before inversion.
pub const COMBINE_JITTER: f64 = 1e-8;

/// `sum_{i in batch} l_i(theta) + log p(theta) / J`.
pub struct SubposteriorTarget<'a, M: ?Sized> {
    pub model: &'a M,
    pub batch: &'a [usize],
    pub j: usize,
}

impl<'a, M: ItemLikelihood + ?Sized> SubposteriorTarget<'a, M> {
    pub fn new(model: &'a M, batch: &'a [usize], j: usize) -> Result<Self> {
        if j == 0 {
            return Err(Error::invalid("batch count must be at least 1"));
        }
        if batch.iter().any(|&i| i >= model.n_items()) {
            return Err(Error::invalid("batch index out of range"));
        }
        Ok(Self { model, batch, j })
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let lp = self.model.log_prior(theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let ll: f64 = self
            .batch
            .iter()
            .map(|&i| self.model.item_loglik(i, theta))
            .sum();
        ll + lp / self.j as f64
    }
}

impl<M: ItemLikelihood + ?Sized> LogTarget for SubposteriorTarget<'_, M> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn evaluate(&mut self, theta: &ParamVec, _rng: &mut RngStream) -> f64 {
        self.log_density(theta)
    }
}

/// Retained draws of one batch chain and their sample covariance.
#[derive(Debug, Clone)]
pub struct BatchDraws {
    pub d: usize,
    /// Row-major post-burn-in samples.
    pub samples: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

impl BatchDraws {
    pub fn new(samples: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 || samples.is_empty() || !samples.len().is_multiple_of(d) {
            return Err(Error::invalid(
                "batch draws must be a non-empty n x d block",
            ));
        }
        let covariance = sample_covariance(&samples, d);
        Ok(Self {
            d,
            samples,
            covariance,
        })
    }

    pub fn from_chain(chain: &Chain) -> Result<Self> {
        Self::new(chain.retained().to_vec(), chain.d)
    }

    pub fn rows(&self) -> usize {
        self.samples.len() / self.d
    }
}

/// `theta_t = (sum_j W_j)^{-1} sum_j W_j theta_t^(j)` with `W_j` the inverse
/// batch covariance, pairing draws by index. Output has as many rows as the
/// shortest batch.
pub fn consensus_combine(draws: &[BatchDraws]) -> Result<Vec<f64>> {
    let first = draws
        .first()
        .ok_or_else(|| Error::invalid("consensus combine needs at least one batch"))?;
    let d = first.d;
    if draws.iter().any(|b| b.d != d) {
        return Err(Error::invalid("batches disagree on dimension"));
    }
    let rows = draws.iter().map(BatchDraws::rows).min().unwrap_or(0);
    let mut weights = Vec::with_capacity(draws.len());
    let mut total = DMatrix::zeros(d, d);
    for (j, b) in draws.iter().enumerate() {
        let chol = cholesky_with_trace_jitter(&b.covariance, COMBINE_JITTER)
            .ok_or(Error::SingularBatch { batch: j })?;
        let w = chol.inverse();
        total += &w;
        weights.push(w);
    }
    let total_chol = total
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("sum of batch precisions".into()))?;
    let mut out = Vec::with_capacity(rows * d);
    let mut acc = DVector::zeros(d);
    for t in 0..rows {
        acc.fill(0.0);
        for (b, w) in draws.iter().zip(&weights) {
            let x = DVector::from_column_slice(&b.samples[t * d..(t + 1) * d]);
            acc += w * x;
        }
        out.extend_from_slice(total_chol.solve(&acc).as_slice());
    }
    Ok(out)
}

/// Batch chains plus the combined output as a chain with no burn-in.
#[derive(Debug, Clone)]
pub struct DacRun {
    pub batch_chains: Vec<Chain>,
    pub combined: Chain,
}

/// Runs one adaptive RWM chain per batch in parallel (stream `j` of `rng`
/// for batch `j`) and combines them. The combined chain's CPU time is the
/// slowest batch plus the combine step.
pub fn run_dac<M: ItemLikelihood + ?Sized>(
    model: &M,
    partition: &Partition,
    initial: &ParamVec,
    cfg: &RunConfig,
    initial_sd: f64,
    rng: &RngStream,
) -> Result<DacRun> {
    let j = partition.batch_count();
    let batch_chains: Vec<Chain> = partition
        .batches()
        .par_iter()
        .enumerate()
        .map(|(k, batch)| {
            let target = SubposteriorTarget::new(model, batch, j)?;
            let mut stream = rng.substream(k as u64);
            run_chain(initial.clone(), target, cfg, initial_sd, &mut stream)
        })
        .collect::<Result<_>>()?;
    let timer = CpuTimer::start();
    let draws = batch_chains
        .iter()
        .map(BatchDraws::from_chain)
        .collect::<Result<Vec<_>>>()?;
    let samples = consensus_combine(&draws)?;
    let combine_cpu = timer.elapsed();
    let d = initial.dim();
    let rows = samples.len() / d;
    let accept_flags = (0..rows)
        .map(|t| t == 0 || samples[t * d..(t + 1) * d] != samples[(t - 1) * d..t * d])
        .collect();
    let slowest = batch_chains
        .iter()
        .map(|c| c.cpu_seconds)
        .fold(0.0, f64::max);
    let stats = ChainStats {
        nonfinite_proposals: batch_chains
            .iter()
            .map(|c| c.stats.nonfinite_proposals)
            .sum(),
        ..ChainStats::default()
    };
    let combined = Chain {
        d,
        samples,
        accept_flags,
        burn_in: 0,
        cpu_seconds: slowest + combine_cpu,
        adaptation_log: Vec::new(),
        stats,
        seed: rng.seed(),
        stream_id: rng.stream_id(),
        final_proposal: Vec::new(),
    };
    Ok(DacRun {
        batch_chains,
        combined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::partition_indices;
    use crate::models::toy::GaussianMeanModel;
    use crate::models::{generate_logistic, LogisticModel};
    use proptest::prelude::*;

    fn logistic() -> LogisticModel {
        generate_logistic(200, &[-2.0, 2.0], &mut RngStream::new(1, 0)).unwrap()
    }

    #[test]
    fn single_batch_is_full_posterior() {
        let m = logistic();
        let all: Vec<usize> = (0..200).collect();
        let t = SubposteriorTarget::new(&m, &all, 1).unwrap();
        let theta = [0.3, -0.2];
        assert!((t.log_density(&theta) - m.log_posterior(&theta)).abs() < 1e-10);
    }

    #[test]
    fn flat_prior_gives_batch_loglik() {
        let m = GaussianMeanModel::new(vec![0.5, -1.0, 2.0], 1, 1.0, None).unwrap();
        let batch = [0, 2];
        for j in [1, 3, 7] {
            let t = SubposteriorTarget::new(&m, &batch, j).unwrap();
            let ll = m.item_loglik(0, &[0.1]) + m.item_loglik(2, &[0.1]);
            assert_eq!(t.log_density(&[0.1]), ll);
        }
    }

    #[test]
    fn hand_checked_gaussian_value() {
        let m = GaussianMeanModel::new(vec![1.0, 5.0], 1, 1.0, Some(1.0)).unwrap();
        let t = SubposteriorTarget::new(&m, &[0], 2).unwrap();
        let c = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((t.log_density(&[0.0]) - (-0.5 + c + 0.5 * c)).abs() < 1e-15);
    }

    #[test]
    fn product_identity() {
        let m = logistic();
        let mut rng = RngStream::new(2, 0);
        for j in [2, 3, 5] {
            let p = partition_indices(200, j, &mut rng).unwrap();
            for _ in 0..20 {
                let theta = [3.0 * rng.normal(), 3.0 * rng.normal()];
                let sum: f64 = p
                    .batches()
                    .iter()
                    .map(|b| {
                        SubposteriorTarget::new(&m, b, j)
                            .unwrap()
                            .log_density(&theta)
                    })
                    .sum();
                assert!((sum - m.log_posterior(&theta)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn combine_identities() {
        let a = BatchDraws::new(vec![0.0, 1.0, 2.0, 3.0, 2.0, 1.0], 2).unwrap();
        assert_eq!(
            consensus_combine(std::slice::from_ref(&a)).unwrap().len(),
            6
        );
        let out = consensus_combine(&[a.clone(), a.clone()]).unwrap();
        for (x, y) in out.iter().zip(&a.samples) {
            assert!((x - y).abs() < 1e-12);
        }
        let single = consensus_combine(std::slice::from_ref(&a)).unwrap();
        for (x, y) in single.iter().zip(&a.samples) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_weighted_average() {
        let b1 = BatchDraws {
            d: 1,
            samples: vec![0.0],
            covariance: DMatrix::from_element(1, 1, 1.0),
        };
        let b2 = BatchDraws {
            d: 1,
            samples: vec![1.0],
            covariance: DMatrix::from_element(1, 1, 4.0),
        };
        let out = consensus_combine(&[b1, b2]).unwrap();
        assert!((out[0] - 0.2).abs() < 1e-7);
    }

    #[test]
    fn singular_batch_is_named() {
        let ok = BatchDraws::new(vec![0.0, 1.0, 2.0], 1).unwrap();
        let flat = BatchDraws::new(vec![1.0, 1.0, 1.0], 1).unwrap();
        let err = consensus_combine(&[ok, flat]).unwrap_err();
        assert!(matches!(err, Error::SingularBatch { batch: 1 }));
    }

    #[test]
    fn truncates_to_shortest() {
        let a = BatchDraws::new(vec![0.0, 1.0, 2.0, 3.0], 1).unwrap();
        let b = BatchDraws::new(vec![0.0, 2.0, 1.0], 1).unwrap();
        assert_eq!(consensus_combine(&[a, b]).unwrap().len(), 3);
    }

    proptest! {
        #[test]
        fn affine_equivariance(shift in -5.0..5.0f64, scale in 0.2..5.0f64, seed in 0u64..1000) {
            let mut rng = RngStream::new(seed, 0);
            let mk = |rng: &mut RngStream, s: f64| {
                BatchDraws::new((0..40).map(|_| s * rng.normal()).collect(), 2).unwrap()
            };
            let draws = vec![mk(&mut rng, 1.0), mk(&mut rng, 2.0)];
            let base = consensus_combine(&draws).unwrap();
            let mapped: Vec<BatchDraws> = draws
                .iter()
                .map(|b| BatchDraws {
                    d: 2,
                    samples: b.samples.iter().map(|v| scale * v + shift).collect(),
                    covariance: &b.covariance * (scale * scale),
                })
                .collect();
            let out = consensus_combine(&mapped).unwrap();
            for (x, y) in out.iter().zip(&base) {
                prop_assert!((x - (scale * y + shift)).abs() < 1e-6 * (1.0 + x.abs()));
            }
        }
    }
}
