//! Likelihood-free kernels: ABC rejection, ABC-MCMC and Bayesian synthetic
//! likelihood MCMC.

mod abc;
mod bsl;
mod distance;

pub use abc::{abc_reject, AbcKernel, AbcRejectOutput, DEFAULT_PROBE_BUDGET, MIN_ACCEPT_RATE};
pub use bsl::{bsl_estimate, fit as fit_sl, gaussian_sl, BslKernel, SlEstimate, SL_JITTER};
pub use distance::{
    calibrate, mad_scaling, Calibration, CalibrationArtifact, DistanceSpec,
    DEFAULT_EPSILON_QUANTILE, DEFAULT_PILOT_SIZE,
};
