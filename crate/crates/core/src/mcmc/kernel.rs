use super::adapt::adapt_covariance;
use super::chain::{AdaptationRecord, Chain, ChainStats};
use super::proposal::{Proposal, ProposalSpec};
use super::target::LogTarget;
use crate::cputime::CpuTimer;
use crate::error::{Error, Result};
use crate::param::ParamVec;
use crate::rng::RngStream;

/// Consecutive `-inf` states tolerated at the start of a run before aborting.
pub const DEFAULT_ABORT_AFTER: usize = 1000;

/// Current position of a chain together with the cached (possibly estimated)
/// log-target there and any kernel-specific cache.
#[derive(Debug, Clone)]
pub struct ChainState<A = ()> {
    pub theta: ParamVec,
    pub cached_log_target: f64,
    pub iteration: usize,
    pub aux: A,
}

impl ChainState<()> {
    pub fn new(theta: ParamVec, cached_log_target: f64) -> Self {
        Self {
            theta,
            cached_log_target,
            iteration: 0,
            aux: (),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub accepted: bool,
    /// `log min(1, ratio)`; `-inf` for rejected non-finite or unsupported draws.
    pub log_alpha: f64,
    pub nonfinite_proposal: bool,
    /// Both endpoints carried a degenerate estimate (zero ABC probability,
    /// singular synthetic likelihood) and the move was rejected for that reason.
    pub degenerate: bool,
}

impl StepInfo {
    pub fn rejected_nonfinite() -> Self {
        Self {
            accepted: false,
            log_alpha: f64::NEG_INFINITY,
            nonfinite_proposal: true,
            degenerate: false,
        }
    }

    pub fn rejected_outside_support() -> Self {
        Self {
            accepted: false,
            log_alpha: f64::NEG_INFINITY,
            nonfinite_proposal: false,
            degenerate: false,
        }
    }
}

/// One Markov transition over a cached state.
pub trait Kernel {
    type Aux: Clone;

    fn dim(&self) -> usize;

    fn init(&mut self, theta: ParamVec, rng: &mut RngStream) -> Result<ChainState<Self::Aux>>;

    fn step<P: Proposal>(
        &mut self,
        state: &mut ChainState<Self::Aux>,
        proposal: &P,
        rng: &mut RngStream,
    ) -> Result<StepInfo>;

    /// Adds kernel-side counters to the chain's statistics after a run.
    fn record_stats(&self, _stats: &mut ChainStats) {}
}

/// `log alpha` for a move from a state with log-target `current` to one with
/// `proposed`, given the proposal correction `log q(cur|prop) - log q(prop|cur)`.
/// Leaving a `-inf` state for a finite one is always accepted; moving to
/// `-inf` never is.
pub fn log_accept_prob(current: f64, proposed: f64, log_correction: f64) -> f64 {
    if proposed == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if current == f64::NEG_INFINITY {
        return 0.0;
    }
    let r = proposed - current + log_correction;
    if r.is_nan() {
        0.0
    } else {
        r.min(0.0)
    }
}

/// Uniform-threshold test `log U <= log alpha` with `U` on (0, 1].
pub fn metropolis_accept(log_alpha: f64, rng: &mut RngStream) -> bool {
    let u = 1.0 - rng.uniform();
    u.ln() <= log_alpha
}

/// Metropolis–Hastings transition over an exact or noisy log-target. The
/// value at the current state is never recomputed.
pub fn mh_step<T, P>(
    state: &mut ChainState<()>,
    target: &mut T,
    proposal: &P,
    rng: &mut RngStream,
) -> Result<StepInfo>
where
    T: LogTarget + ?Sized,
    P: Proposal + ?Sized,
{
    let omega = proposal.propose(&state.theta, rng);
    if !omega.is_finite() {
        return Ok(StepInfo::rejected_nonfinite());
    }
    let proposed = if target.in_support(&omega) {
        target.evaluate(&omega, rng)
    } else {
        f64::NEG_INFINITY
    };
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
    }
    Ok(StepInfo {
        accepted,
        log_alpha,
        nonfinite_proposal: false,
        degenerate: false,
    })
}

/// Plain Metropolis–Hastings over a [`LogTarget`].
pub struct MhKernel<T> {
    pub target: T,
}

impl<T: LogTarget> MhKernel<T> {
    pub fn new(target: T) -> Self {
        Self { target }
    }
}

impl<T: LogTarget> Kernel for MhKernel<T> {
    type Aux = ();

    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn init(&mut self, theta: ParamVec, rng: &mut RngStream) -> Result<ChainState<()>> {
        let lp = if self.target.in_support(&theta) {
            self.target.evaluate(&theta, rng)
        } else {
            f64::NEG_INFINITY
        };
        if lp.is_nan() {
            return Err(Error::NanTarget { iteration: 0 });
        }
        Ok(ChainState::new(theta, lp))
    }

    fn step<P: Proposal>(
        &mut self,
        state: &mut ChainState<()>,
        proposal: &P,
        rng: &mut RngStream,
    ) -> Result<StepInfo> {
        mh_step(state, &mut self.target, proposal, rng)
    }
}

/// Length, burn-in and adaptation schedule of a run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Total transitions `M`; the chain records one row per transition.
    pub iterations: usize,
    /// Burn-in length `B`; adaptation happens only at iterations `<= B`.
    pub burn_in: usize,
    /// Adapt every `adapt_interval` iterations during burn-in; 0 disables adaptation.
    pub adapt_interval: usize,
    pub abort_after: usize,
}

impl RunConfig {
    pub fn new(iterations: usize, burn_in: usize, adapt_interval: usize) -> Self {
        Self {
            iterations,
            burn_in,
            adapt_interval,
            abort_after: DEFAULT_ABORT_AFTER,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::invalid(format!(
                "need M > B, got M={} B={}",
                self.iterations, self.burn_in
            )));
        }
        Ok(())
    }
}

/// Runs `cfg.iterations` transitions of `kernel` from `initial`.
///
/// The proposal covariance is re-estimated from the full history every
/// `adapt_interval` iterations up to and including `burn_in`, provided the
/// chain has visited at least `d + 1` distinct states (otherwise the sample
/// covariance would collapse onto the jitter). It is frozen afterwards. CPU
/// time covers initialisation and all transitions.
pub fn run_kernel<K: Kernel>(
    kernel: &mut K,
    initial: ParamVec,
    proposal: ProposalSpec,
    cfg: &RunConfig,
    rng: &mut RngStream,
) -> Result<Chain> {
    cfg.validate()?;
    let d = kernel.dim();
    if initial.dim() != d || proposal.dim() != d {
        return Err(Error::invalid(format!(
            "dimension mismatch: kernel {d}, initial {}, proposal {}",
            initial.dim(),
            proposal.dim()
        )));
    }
    let (seed, stream_id) = (rng.seed(), rng.stream_id());
    let timer = CpuTimer::start();
    let mut proposal = proposal;
    let mut state = kernel.init(initial, rng)?;
    let mut ever_supported = state.cached_log_target > f64::NEG_INFINITY;
    let mut samples = Vec::with_capacity(cfg.iterations * d);
    let mut accept_flags = Vec::with_capacity(cfg.iterations);
    let mut adaptation_log = Vec::new();
    let mut stats = ChainStats::default();
    let mut distinct_states = 1usize;

    for t in 1..=cfg.iterations {
        let info = kernel.step(&mut state, &proposal, rng)?;
        state.iteration = t;
        samples.extend_from_slice(&state.theta);
        accept_flags.push(info.accepted);
        if info.accepted {
            distinct_states += 1;
        }
        stats.nonfinite_proposals += usize::from(info.nonfinite_proposal);
        stats.degenerate_steps += usize::from(info.degenerate);

        if !ever_supported {
            if state.cached_log_target > f64::NEG_INFINITY {
                ever_supported = true;
            } else if t >= cfg.abort_after {
                return Err(Error::Aborted(format!(
                    "log-target was -inf at every one of the first {t} proposals"
                )));
            }
        }

        if cfg.adapt_interval > 0
            && t % cfg.adapt_interval == 0
            && t <= cfg.burn_in
            && distinct_states > d
        {
            proposal = adapt_covariance(&samples, t, cfg.burn_in, &proposal);
            adaptation_log.push(AdaptationRecord {
                iteration: t,
                covariance: proposal.effective_covariance().as_slice().to_vec(),
            });
        }
    }

    kernel.record_stats(&mut stats);
    Ok(Chain {
        d,
        samples,
        accept_flags,
        burn_in: cfg.burn_in,
        cpu_seconds: timer.elapsed(),
        adaptation_log,
        stats,
        seed,
        stream_id,
        final_proposal: proposal.effective_covariance().as_slice().to_vec(),
    })
}

/// Adaptive random-walk Metropolis over `target`, starting from `initial`
/// with an isotropic proposal of standard deviation `initial_sd`.
pub fn run_chain<T: LogTarget>(
    initial: ParamVec,
    target: T,
    cfg: &RunConfig,
    initial_sd: f64,
    rng: &mut RngStream,
) -> Result<Chain> {
    let d = target.dim();
    let proposal = ProposalSpec::isotropic(d, initial_sd * initial_sd)?;
    run_kernel(&mut MhKernel::new(target), initial, proposal, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::FnTarget;

    struct Fixed(ParamVec);

    impl Proposal for Fixed {
        fn propose(&self, _current: &ParamVec, _rng: &mut RngStream) -> ParamVec {
            self.0.clone()
        }
    }

    fn std_normal(x: &[f64]) -> f64 {
        -0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn flat_target_always_accepts() {
        let mut rng = RngStream::new(1, 0);
        let mut target = FnTarget::new(2, |_: &[f64]| 3.0);
        let prop = ProposalSpec::isotropic(2, 1.0).unwrap();
        let mut state = ChainState::new(ParamVec::zeros(2), 3.0);
        for _ in 0..200 {
            let info = mh_step(&mut state, &mut target, &prop, &mut rng).unwrap();
            assert_eq!(info.log_alpha, 0.0);
            assert!(info.accepted);
        }
    }

    #[test]
    fn leaving_minus_infinity_is_certain() {
        assert_eq!(log_accept_prob(f64::NEG_INFINITY, -1e6, 0.0), 0.0);
        assert_eq!(
            log_accept_prob(f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0),
            f64::NEG_INFINITY
        );
        assert_eq!(
            log_accept_prob(0.0, f64::NEG_INFINITY, 0.0),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn standard_normal_ratio() {
        let mut rng = RngStream::new(2, 0);
        let mut target = FnTarget::new(1, std_normal);
        let prop = Fixed(ParamVec::new(vec![1.0]).unwrap());
        let mut state = ChainState::new(ParamVec::zeros(1), 0.0);
        let info = mh_step(&mut state, &mut target, &prop, &mut rng).unwrap();
        assert!((info.log_alpha.exp() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((info.log_alpha.exp() - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn nan_target_is_an_error_and_non_finite_draw_is_rejected() {
        let mut rng = RngStream::new(3, 0);
        let mut nan = FnTarget::new(1, |_: &[f64]| f64::NAN);
        let prop = ProposalSpec::isotropic(1, 1.0).unwrap();
        let mut state = ChainState::new(ParamVec::zeros(1), 0.0);
        assert!(matches!(
            mh_step(&mut state, &mut nan, &prop, &mut rng),
            Err(Error::NanTarget { .. })
        ));
        let bad = Fixed(ParamVec::from_unchecked(vec![f64::INFINITY]));
        let mut ok = FnTarget::new(1, std_normal);
        let info = mh_step(&mut state, &mut ok, &bad, &mut rng).unwrap();
        assert!(info.nonfinite_proposal && !info.accepted);
    }

    #[test]
    fn alpha_is_a_probability() {
        let mut rng = RngStream::new(4, 0);
        let mut target = FnTarget::new(1, |x: &[f64]| -x[0].powi(4) + (3.0 * x[0]).sin());
        let prop = ProposalSpec::isotropic(1, 4.0).unwrap();
        let mut state = ChainState::new(ParamVec::zeros(1), 0.0);
        for _ in 0..2000 {
            let info = mh_step(&mut state, &mut target, &prop, &mut rng).unwrap();
            let a = info.log_alpha.exp();
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn short_flat_run() {
        let mut rng = RngStream::new(5, 0);
        let chain = run_chain(
            ParamVec::zeros(1),
            FnTarget::new(1, |_: &[f64]| 0.0),
            &RunConfig::new(10, 0, 5),
            1.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(chain.rows(), 10);
        assert!(chain.accept_flags.iter().all(|&a| a));
    }

    #[test]
    fn runs_are_reproducible_and_freeze_after_burn_in() {
        let cfg = RunConfig::new(3000, 1000, 100);
        let run = || {
            run_chain(
                ParamVec::zeros(2),
                FnTarget::new(2, std_normal),
                &cfg,
                0.5,
                &mut RngStream::new(77, 1),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.accept_flags, b.accept_flags);
        assert!(!a.adaptation_log.is_empty());
        assert!(a.adaptation_log.iter().all(|r| r.iteration <= 1000));
        for t in 1..a.rows() {
            if !a.accept_flags[t] {
                assert_eq!(a.row(t), a.row(t - 1));
            }
        }
    }

    #[test]
    fn aborts_when_never_in_support() {
        let err = run_chain(
            ParamVec::zeros(1),
            FnTarget::new(1, |_: &[f64]| f64::NEG_INFINITY),
            &RunConfig::new(5000, 0, 0),
            1.0,
            &mut RngStream::new(6, 0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Aborted(_)));
    }

    #[test]
    fn rejects_m_not_above_b() {
        let r = run_chain(
            ParamVec::zeros(1),
            FnTarget::new(1, std_normal),
            &RunConfig::new(10, 10, 0),
            1.0,
            &mut RngStream::new(6, 0),
        );
        assert!(r.is_err());
    }
}
