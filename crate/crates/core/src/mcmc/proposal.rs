use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::param::ParamVec;
use crate::rng::RngStream;

pub const DEFAULT_JITTER: f64 = 1e-6;

/// Proposal mechanism `q(. | theta)`.
pub trait Proposal {
    /// Draws a candidate. The result may be non-finite; kernels reject such draws.
    fn propose(&self, current: &ParamVec, rng: &mut RngStream) -> ParamVec;

    /// `log q(current | proposed) - log q(proposed | current)`; zero for symmetric proposals.
    fn log_correction(&self, _current: &ParamVec, _proposed: &ParamVec) -> f64 {
        0.0
    }
}

/// Gaussian random walk with covariance `scale * (covariance + jitter * I)`.
#[derive(Debug, Clone)]
pub struct ProposalSpec {
    covariance: DMatrix<f64>,
    scale: f64,
    jitter: f64,
    factor: DMatrix<f64>,
}

impl ProposalSpec {
    pub fn new(covariance: DMatrix<f64>, scale: f64, jitter: f64) -> Result<Self> {
        let d = covariance.nrows();
        if d == 0 || covariance.ncols() != d {
            return Err(Error::invalid(
                "proposal covariance must be square and nonempty",
            ));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!(
                "proposal scale must be positive, got {scale}"
            )));
        }
        if !(jitter.is_finite() && jitter >= 0.0) {
            return Err(Error::invalid("proposal jitter must be nonnegative"));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > 1e-10 * (1.0 + covariance.amax()) {
            return Err(Error::invalid("proposal covariance is not symmetric"));
        }
        let mut eff = covariance.clone();
        for i in 0..d {
            eff[(i, i)] += jitter;
        }
        eff *= scale;
        let chol = nalgebra::Cholesky::new(eff)
            .ok_or_else(|| Error::NotPositiveDefinite("proposal covariance".into()))?;
        Ok(Self {
            covariance,
            scale,
            jitter,
            factor: chol.l(),
        })
    }

    /// `variance * I` with unit scale and the default jitter.
    pub fn isotropic(d: usize, variance: f64) -> Result<Self> {
        Self::new(DMatrix::identity(d, d) * variance, 1.0, DEFAULT_JITTER)
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn effective_covariance(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }
}

impl Proposal for ProposalSpec {
    fn propose(&self, current: &ParamVec, rng: &mut RngStream) -> ParamVec {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let mut out = current.to_vec();
        for a in 0..d {
            let mut step = 0.0;
            for (b, zb) in z.iter().enumerate().take(a + 1) {
                step += self.factor[(a, b)] * zb;
            }
            out[a] += step;
        }
        ParamVec::from_unchecked(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_have_requested_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let p = ProposalSpec::new(cov.clone(), 0.5, 0.0).unwrap();
        let mut rng = RngStream::new(4, 0);
        let origin = ParamVec::zeros(2);
        let n = 200_000;
        let mut rows = Vec::with_capacity(2 * n);
        for _ in 0..n {
            rows.extend_from_slice(&p.propose(&origin, &mut rng));
        }
        let emp = crate::linalg::sample_covariance(&rows, 2);
        for (e, c) in emp.iter().zip((cov * 0.5).iter()) {
            assert!((e - c).abs() < 0.02, "{e} vs {c}");
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(ProposalSpec::new(DMatrix::identity(2, 2), 0.0, 0.0).is_err());
        assert!(ProposalSpec::new(DMatrix::zeros(2, 2), 1.0, 0.0).is_err());
        assert!(ProposalSpec::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            1.0,
            0.0
        )
        .is_err());
        assert!(ProposalSpec::new(DMatrix::zeros(2, 2), 1.0, 1e-6).is_ok());
    }
}
