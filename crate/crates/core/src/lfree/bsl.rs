use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_trace_jitter, column_means, mvn_logpdf, sample_covariance};
use crate::mcmc::{
    log_accept_prob, metropolis_accept, ChainState, ChainStats, Kernel, Proposal, StepInfo,
};
use crate::models::Simulator;
use crate::param::ParamVec;
use crate::rng::RngStream;

/// Relative diagonal jitter for synthetic-likelihood covariances.
pub const SL_JITTER: f64 = 1e-8;

/// Gaussian synthetic likelihood fitted to simulated summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct SlEstimate {
    pub mu: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub log_sl: f64,
    pub k: usize,
    /// Covariance singular after jitter; `log_sl` is `-inf`.
    pub degenerate: bool,
}

/// `log N(s0; mean, SampleCov)` of the given summaries.
pub fn gaussian_sl(summaries: &[Vec<f64>], s0: &[f64]) -> Result<SlEstimate> {
    let k = summaries.len();
    let p = s0.len();
    if k < 2 || summaries.iter().any(|s| s.len() != p) {
        return Err(Error::invalid(
            "synthetic likelihood needs at least two summaries of length p",
        ));
    }
    let flat: Vec<f64> = summaries.iter().flatten().copied().collect();
    let mu = column_means(&flat, p);
    let sigma = sample_covariance(&flat, p);
    Ok(fit(mu, sigma, s0, k))
}

/// Gaussian synthetic likelihood of `s0` under given moments.
pub fn fit(mu: Vec<f64>, sigma: DMatrix<f64>, s0: &[f64], k: usize) -> SlEstimate {
    match cholesky_with_trace_jitter(&sigma, SL_JITTER) {
        Some(chol) => SlEstimate {
            log_sl: mvn_logpdf(s0, &mu, &chol),
            mu,
            sigma,
            k,
            degenerate: false,
        },
        None => SlEstimate {
            mu,
            sigma,
            log_sl: f64::NEG_INFINITY,
            k,
            degenerate: true,
        },
    }
}

/// Simulates `k` pseudo-datasets at `theta` and fits the synthetic
/// likelihood of `s0`.
pub fn bsl_estimate<S: Simulator + ?Sized>(
    model: &S,
    theta: &[f64],
    k: usize,
    s0: &[f64],
    rng: &mut RngStream,
) -> Result<SlEstimate> {
    if k < 2 {
        return Err(Error::invalid("BSL needs K >= 2 simulations"));
    }
    let summaries = (0..k)
        .map(|_| model.simulate_summary(theta, rng))
        .collect::<Result<Vec<_>>>()?;
    gaussian_sl(&summaries, s0)
}

/// BSL-MCMC: fresh synthetic likelihood at every proposal, the current
/// state's estimate held fixed until the next acceptance.
pub struct BslKernel<'a, S: ?Sized> {
    pub model: &'a S,
    pub k: usize,
    pub s0: &'a [f64],
    simulations: usize,
}

impl<'a, S: Simulator + ?Sized> BslKernel<'a, S> {
    pub fn new(model: &'a S, k: usize, s0: &'a [f64]) -> Result<Self> {
        if k < s0.len() + 2 {
            log::warn!("BSL with K = {k} < p + 2 gives singular covariances");
        }
        if k < 2 {
            return Err(Error::invalid("BSL needs K >= 2"));
        }
        Ok(Self {
            model,
            k,
            s0,
            simulations: 0,
        })
    }

    pub fn simulations(&self) -> usize {
        self.simulations
    }

    fn estimate(&mut self, theta: &[f64], rng: &mut RngStream) -> Result<SlEstimate> {
        self.simulations += self.k;
        bsl_estimate(self.model, theta, self.k, self.s0, rng)
    }
}

impl<S: Simulator + ?Sized> Kernel for BslKernel<'_, S> {
    type Aux = Option<SlEstimate>;

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn init(
        &mut self,
        theta: ParamVec,
        rng: &mut RngStream,
    ) -> Result<ChainState<Option<SlEstimate>>> {
        let lp = self.model.log_prior(&theta);
        let (cached, aux) = if lp > f64::NEG_INFINITY {
            let est = self.estimate(&theta, rng)?;
            (lp + est.log_sl, Some(est))
        } else {
            (f64::NEG_INFINITY, None)
        };
        Ok(ChainState {
            theta,
            cached_log_target: cached,
            iteration: 0,
            aux,
        })
    }

    fn step<P: Proposal>(
        &mut self,
        state: &mut ChainState<Option<SlEstimate>>,
        proposal: &P,
        rng: &mut RngStream,
    ) -> Result<StepInfo> {
        let omega = proposal.propose(&state.theta, rng);
        if !omega.is_finite() {
            return Ok(StepInfo::rejected_nonfinite());
        }
        let lp = self.model.log_prior(&omega);
        if lp == f64::NEG_INFINITY {
            return Ok(StepInfo::rejected_outside_support());
        }
        let est = self.estimate(&omega, rng)?;
        let proposed = lp + est.log_sl;
        if proposed.is_nan() {
            return Err(Error::NanTarget {
                iteration: state.iteration + 1,
            });
        }
        let degenerate = est.degenerate && state.cached_log_target == f64::NEG_INFINITY;
        let log_alpha = log_accept_prob(
            state.cached_log_target,
            proposed,
            proposal.log_correction(&state.theta, &omega),
        );
        let accepted = metropolis_accept(log_alpha, rng);
        if accepted {
            state.theta = omega;
            state.cached_log_target = proposed;
            state.aux = Some(est);
        }
        Ok(StepInfo {
            accepted,
            log_alpha,
            nonfinite_proposal: false,
            degenerate,
        })
    }

    fn record_stats(&self, stats: &mut ChainStats) {
        stats.simulations += self.simulations;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::ProposalSpec;
    use crate::models::toy::GaussianSummaryToy;
    use crate::models::CountingSimulator;

    #[test]
    fn identical_summaries_are_degenerate() {
        let e = gaussian_sl(&vec![vec![1.0, 2.0]; 5], &[0.0, 0.0]).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.log_sl, f64::NEG_INFINITY);
    }

    #[test]
    fn two_point_arithmetic() {
        let e = gaussian_sl(&[vec![0.0], vec![2.0]], &[1.0]).unwrap();
        assert_eq!(e.mu, vec![1.0]);
        assert_eq!(e.sigma[(0, 0)], 2.0);
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 2.0).ln();
        assert!((e.log_sl - expected).abs() < 1e-7);
    }

    #[test]
    fn moments_match_brute_force() {
        let mut rng = RngStream::new(1, 0);
        let s: Vec<Vec<f64>> = (0..30)
            .map(|_| vec![rng.normal(), 2.0 * rng.normal() + 1.0])
            .collect();
        let e = gaussian_sl(&s, &[0.0, 0.0]).unwrap();
        let n = s.len() as f64;
        for a in 0..2 {
            let m = s.iter().map(|v| v[a]).sum::<f64>() / n;
            assert!((e.mu[a] - m).abs() < 1e-14);
            for b in 0..2 {
                let mb = s.iter().map(|v| v[b]).sum::<f64>() / n;
                let c = s.iter().map(|v| (v[a] - m) * (v[b] - mb)).sum::<f64>() / (n - 1.0);
                assert!((e.sigma[(a, b)] - c).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn converges_to_analytic_sl() {
        let toy = GaussianSummaryToy {
            n: 4,
            prior_var: 1.0,
        };
        let (theta, s0): (f64, f64) = (0.2, 0.7);
        let var: f64 = 0.25;
        let exact = -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (s0 - theta).powi(2) / var);
        let mut rng = RngStream::new(2, 0);
        let err = |k: usize, rng: &mut RngStream| {
            let reps = 40;
            (0..reps)
                .map(|_| {
                    (bsl_estimate(&toy, &[theta], k, &[s0], rng).unwrap().log_sl - exact).powi(2)
                })
                .sum::<f64>()
                / reps as f64
        };
        let e_small = err(100, &mut rng).sqrt();
        let e_large = err(10_000, &mut rng).sqrt();
        assert!(e_large < e_small / 4.0, "{e_small} {e_large}");
    }

    #[test]
    fn simulates_exactly_k_per_iteration_and_rejects_degenerate() {
        let toy = GaussianSummaryToy {
            n: 4,
            prior_var: 1.0,
        };
        let counted = CountingSimulator::new(&toy);
        let s0 = [0.1];
        let mut kernel = BslKernel::new(&counted, 7, &s0).unwrap();
        let mut rng = RngStream::new(3, 0);
        let mut st = kernel.init(ParamVec::zeros(1), &mut rng).unwrap();
        assert_eq!(counted.calls(), 7);
        let prop = ProposalSpec::isotropic(1, 0.1).unwrap();
        for t in 1..=20 {
            kernel.step(&mut st, &prop, &mut rng).unwrap();
            assert_eq!(counted.calls(), 7 * (t + 1));
        }
    }
}
