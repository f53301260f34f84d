use super::proposal::ProposalSpec;
use crate::linalg::sample_covariance;

/// Random-walk optimal scaling `2.38^2 / d`.
pub fn optimal_scale(d: usize) -> f64 {
    2.38 * 2.38 / d as f64
}

/// Haario-style update: `scale * (SampleCov(history) + jitter * I)` with
/// `scale = 2.38^2 / d`.
///
/// `history` is the row-major block of all states recorded so far. The
/// previous proposal is returned unchanged when the update is requested after
/// burn-in (`iteration > burn_in`), when fewer than `d + 1` rows are
/// available, or when the adapted covariance is not positive definite.
pub fn adapt_covariance(
    history: &[f64],
    iteration: usize,
    burn_in: usize,
    previous: &ProposalSpec,
) -> ProposalSpec {
    let d = previous.dim();
    if iteration > burn_in || history.len() / d < d + 1 {
        return previous.clone();
    }
    let cov = sample_covariance(history, d);
    ProposalSpec::new(cov, optimal_scale(d), previous.jitter()).unwrap_or_else(|_| previous.clone())
}
