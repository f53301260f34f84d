//! Approximate MCMC for tall data and intractable likelihoods.

pub mod cluster;
pub mod coreset;
pub mod cputime;
pub mod dac;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod lfree;
pub mod linalg;
pub mod mc;
pub mod mcmc;
pub mod metrics;
pub mod models;
pub mod param;
pub mod refset;
pub mod rng;
pub mod subsample;

pub use error::{Error, Result};
pub use param::ParamVec;
pub use rng::RngStream;
