//! Metropolis–Hastings with Gaussian random-walk proposals, finite
//! (burn-in only) covariance adaptation, and a generic chain runner.
//!
//! Every sampler in the crate is a [`Kernel`]: it owns whatever it needs to
//! evaluate (or estimate) the log-target and advances a [`ChainState`] by one
//! transition. [`run_kernel`] drives any kernel with adaptation, timing and
//! recording, so exact, subsampled, ABC and synthetic-likelihood chains all
//! share one loop.

mod adapt;
mod chain;
mod kernel;
mod proposal;
mod target;

pub use adapt::{adapt_covariance, optimal_scale};
pub use chain::{AdaptationRecord, Chain, ChainMetadata, ChainStats};
pub use kernel::{
    log_accept_prob, metropolis_accept, mh_step, run_chain, run_kernel, ChainState, Kernel,
    MhKernel, RunConfig, StepInfo, DEFAULT_ABORT_AFTER,
};
pub use proposal::{Proposal, ProposalSpec, DEFAULT_JITTER};
pub use target::{FnTarget, LogTarget};
