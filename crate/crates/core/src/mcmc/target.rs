use crate::param::ParamVec;
use crate::rng::RngStream;

/// Log unnormalized posterior, possibly a stochastic estimate.
///
/// Kernels evaluate a target once per proposed point and cache the value with
/// the state; a noisy target is never re-evaluated at the current state.
/// `evaluate` returns `-inf` outside the support; `NaN` is treated as a bug.
pub trait LogTarget {
    fn dim(&self) -> usize;

    fn evaluate(&mut self, theta: &ParamVec, rng: &mut RngStream) -> f64;

    fn is_noisy(&self) -> bool {
        false
    }

    fn in_support(&self, _theta: &ParamVec) -> bool {
        true
    }
}

impl<T: LogTarget + ?Sized> LogTarget for &mut T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn evaluate(&mut self, theta: &ParamVec, rng: &mut RngStream) -> f64 {
        (**self).evaluate(theta, rng)
    }

    fn is_noisy(&self) -> bool {
        (**self).is_noisy()
    }

    fn in_support(&self, theta: &ParamVec) -> bool {
        (**self).in_support(theta)
    }
}

/// Deterministic target from a closure.
pub struct FnTarget<F> {
    dim: usize,
    f: F,
}

impl<F: FnMut(&[f64]) -> f64> FnTarget<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: FnMut(&[f64]) -> f64> LogTarget for FnTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&mut self, theta: &ParamVec, _rng: &mut RngStream) -> f64 {
        (self.f)(theta)
    }
}
