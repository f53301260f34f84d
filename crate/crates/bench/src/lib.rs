//! Shared fixtures for the criterion benches.

use bayescomp::models::{
    generate_logistic, sv_simulate, sv_summaries, LogisticModel, SV_THETA_TRUE,
};
use bayescomp::refset::ReferenceSet;
use bayescomp::RngStream;

/// Logistic data set with `n` items at the usual two-dimensional truth.
pub fn logistic_fixture(n: usize) -> LogisticModel {
    generate_logistic(n, &[-2.0, 2.0], &mut RngStream::new(1, 0)).expect("valid logistic fixture")
}

/// Reference set of `h` SV parameter draws, one summary vector each.
pub fn sv_reference_fixture(h: usize, n: usize) -> ReferenceSet {
    let mut rng = RngStream::new(2, 0);
    let mut z = ReferenceSet::new(3, 6, 1).expect("valid dimensions");
    for _ in 0..h {
        let theta = [
            SV_THETA_TRUE[0] + 0.02 * rng.normal(),
            SV_THETA_TRUE[1] + 0.2 * rng.normal(),
            SV_THETA_TRUE[2] + 0.2 * rng.normal(),
        ];
        let y = sv_simulate(&theta, n, &mut rng).expect("simulate");
        let s = sv_summaries(&y).expect("summaries");
        z.push(&theta, &[s.s.to_vec()]).expect("push");
    }
    z
}
