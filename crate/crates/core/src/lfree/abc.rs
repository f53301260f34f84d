use super::distance::DistanceSpec;
use crate::error::{Error, Result};
use crate::mcmc::{
    log_accept_prob, metropolis_accept, ChainState, ChainStats, Kernel, Proposal, StepInfo,
};
use crate::models::Simulator;
use crate::param::ParamVec;
use crate::rng::RngStream;

pub const DEFAULT_PROBE_BUDGET: usize = 1_000_000;
pub const MIN_ACCEPT_RATE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct AbcRejectOutput {
    pub accepted: Vec<ParamVec>,
    pub proposals: usize,
}

impl AbcRejectOutput {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted.len() as f64 / self.proposals as f64
    }
}

/// Prior draws kept when one simulated summary lands within epsilon of
/// `s0`. Aborts when, after each block of `probe_budget` proposals, the
/// acceptance rate is below [`MIN_ACCEPT_RATE`].
pub fn abc_reject<S: Simulator + ?Sized>(
    model: &S,
    dist: &DistanceSpec,
    s0: &[f64],
    n_accept: usize,
    probe_budget: usize,
    rng: &mut RngStream,
) -> Result<AbcRejectOutput> {
    if probe_budget == 0 {
        return Err(Error::invalid("probe budget must be positive"));
    }
    let mut accepted = Vec::with_capacity(n_accept);
    let mut proposals = 0usize;
    while accepted.len() < n_accept {
        let theta = model.sample_prior(rng);
        let s = model.simulate_summary(&theta, rng)?;
        proposals += 1;
        if dist.accepts(&s, s0) {
            accepted.push(theta);
        }
        if proposals.is_multiple_of(probe_budget)
            && (accepted.len() as f64 / proposals as f64) < MIN_ACCEPT_RATE
        {
            return Err(Error::Aborted(format!(
                "ABC acceptance rate {} after {proposals} proposals (epsilon = {})",
                accepted.len() as f64 / proposals as f64,
                dist.epsilon
            )));
        }
    }
    Ok(AbcRejectOutput {
        accepted,
        proposals,
    })
}

/// ABC-MCMC on `p(theta) 1{d(S(y), s0) <= eps}` with one simulation per
/// proposal. The indicator travels with the state: the cached log-target
/// is the log-prior when the state's simulation hit and `-inf` otherwise.
pub struct AbcKernel<'a, S: ?Sized> {
    pub model: &'a S,
    pub distance: &'a DistanceSpec,
    pub s0: &'a [f64],
    simulations: usize,
}

impl<'a, S: Simulator + ?Sized> AbcKernel<'a, S> {
    pub fn new(model: &'a S, distance: &'a DistanceSpec, s0: &'a [f64]) -> Self {
        Self {
            model,
            distance,
            s0,
            simulations: 0,
        }
    }

    pub fn simulations(&self) -> usize {
        self.simulations
    }

    fn hit(&mut self, theta: &[f64], rng: &mut RngStream) -> Result<bool> {
        self.simulations += 1;
        let s = self.model.simulate_summary(theta, rng)?;
        Ok(self.distance.accepts(&s, self.s0))
    }
}

impl<S: Simulator + ?Sized> Kernel for AbcKernel<'_, S> {
    type Aux = ();

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn init(&mut self, theta: ParamVec, rng: &mut RngStream) -> Result<ChainState<()>> {
        let lp = self.model.log_prior(&theta);
        let cached = if lp > f64::NEG_INFINITY && self.hit(&theta, rng)? {
            lp
        } else {
            f64::NEG_INFINITY
        };
        Ok(ChainState::new(theta, cached))
    }

    fn step<P: Proposal>(
        &mut self,
        state: &mut ChainState<()>,
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
        if lp.is_nan() {
            return Err(Error::NanTarget {
                iteration: state.iteration + 1,
            });
        }
        if !self.hit(&omega, rng)? {
            return Ok(StepInfo::rejected_outside_support());
        }
        let log_alpha = log_accept_prob(
            state.cached_log_target,
            lp,
            proposal.log_correction(&state.theta, &omega),
        );
        let accepted = metropolis_accept(log_alpha, rng);
        if accepted {
            state.theta = omega;
            state.cached_log_target = lp;
        }
        Ok(StepInfo {
            accepted,
            log_alpha,
            nonfinite_proposal: false,
            degenerate: false,
        })
    }

    fn record_stats(&self, stats: &mut ChainStats) {
        stats.simulations += self.simulations;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::{run_kernel, ProposalSpec, RunConfig};
    use crate::models::toy::{BernoulliToy, GaussianSummaryToy};

    #[test]
    fn infinite_epsilon_returns_prior() {
        let toy = GaussianSummaryToy {
            n: 5,
            prior_var: 1.0,
        };
        let dist = DistanceSpec::unscaled(1, f64::INFINITY).unwrap();
        let out = abc_reject(&toy, &dist, &[10.0], 2000, 1000, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(out.proposals, 2000);
        let mut x: Vec<f64> = out.accepted.iter().map(|t| t[0]).collect();
        x.sort_by(f64::total_cmp);
        // Kolmogorov-Smirnov against N(0,1), 1% critical value 1.63 / sqrt(n).
        let n = x.len() as f64;
        let cdf = |v: f64| 0.5 * (1.0 + erf(v / 2f64.sqrt()));
        let ks = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = cdf(v);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.63 / n.sqrt(), "{ks}");
    }

    fn erf(x: f64) -> f64 {
        // Abramowitz-Stegun 7.1.26
        let t = 1.0 / (1.0 + 0.327_591_1 * x.abs());
        let y = 1.0
            - (((((1.061_405_429 * t - 1.453_152_027) * t) + 1.421_413_741) * t - 0.284_496_736)
                * t
                + 0.254_829_592)
                * t
                * (-x * x).exp();
        y.copysign(x)
    }

    #[test]
    fn unreachable_epsilon_aborts() {
        let toy = GaussianSummaryToy {
            n: 5,
            prior_var: 1.0,
        };
        let dist = DistanceSpec::unscaled(1, 1e-300).unwrap();
        let err =
            abc_reject(&toy, &dist, &[50.0], 10, 5000, &mut RngStream::new(2, 0)).unwrap_err();
        assert!(matches!(err, Error::Aborted(_)));
    }

    #[test]
    fn discrete_rejection_matches_exact_posterior() {
        let toy = BernoulliToy { p: vec![0.3, 0.8] };
        let dist = DistanceSpec::unscaled(1, 0.0).unwrap();
        let out = abc_reject(
            &toy,
            &dist,
            &[1.0],
            20_000,
            100_000,
            &mut RngStream::new(3, 0),
        )
        .unwrap();
        let f1 = out
            .accepted
            .iter()
            .filter(|t| BernoulliToy::class(t[0]) == 1)
            .count() as f64
            / 20_000.0;
        let exact = toy.posterior(1.0)[1];
        assert!((f1 - exact).abs() < 3.0 * (exact * (1.0 - exact) / 20_000.0).sqrt());
    }

    #[test]
    fn miss_keeps_state_and_infinite_epsilon_always_moves() {
        let toy = GaussianSummaryToy {
            n: 3,
            prior_var: 1e12,
        };
        let never = DistanceSpec::unscaled(1, 0.0).unwrap();
        let s0 = [0.123];
        let mut k = AbcKernel::new(&toy, &never, &s0);
        let mut rng = RngStream::new(4, 0);
        let mut st = k.init(ParamVec::zeros(1), &mut rng).unwrap();
        st.cached_log_target = 0.0;
        let prop = ProposalSpec::isotropic(1, 1.0).unwrap();
        for _ in 0..50 {
            let info = k.step(&mut st, &prop, &mut rng).unwrap();
            assert!(!info.accepted);
            assert_eq!(st.theta[0], 0.0);
        }
        let always = DistanceSpec::unscaled(1, f64::INFINITY).unwrap();
        let mut k = AbcKernel::new(&toy, &always, &s0);
        let chain = run_kernel(
            &mut k,
            ParamVec::zeros(1),
            prop,
            &RunConfig::new(200, 0, 0),
            &mut rng,
        )
        .unwrap();
        assert!(chain.acceptance_rate() > 0.99);
        assert_eq!(k.simulations(), 201);
    }
}
