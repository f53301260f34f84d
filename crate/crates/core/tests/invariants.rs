use std::cell::Cell;

use bayescomp::dac::SubposteriorTarget;
use bayescomp::data::partition_indices;
use bayescomp::mcmc::{log_accept_prob, run_chain, FnTarget, LogTarget, RunConfig};
use bayescomp::models::{generate_logistic, ItemLikelihood};
use bayescomp::refset::{knn_weights, Neighbour, WeightScheme};
use bayescomp::subsample::{cv_estimate, refresh_indices, ControlVariateCache};
use bayescomp::{ParamVec, RngStream};
use proptest::prelude::*;

struct Noisy<'a> {
    calls: &'a Cell<usize>,
}

impl LogTarget for Noisy<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn evaluate(&mut self, theta: &ParamVec, rng: &mut RngStream) -> f64 {
        self.calls.set(self.calls.get() + 1);
        -0.5 * theta[0] * theta[0] + 0.3 * rng.normal()
    }

    fn is_noisy(&self) -> bool {
        true
    }
}

#[test]
fn noisy_target_is_evaluated_once_per_proposal() {
    let calls = Cell::new(0);
    let cfg = RunConfig::new(2000, 500, 100);
    run_chain(
        ParamVec::zeros(1),
        Noisy { calls: &calls },
        &cfg,
        1.0,
        &mut RngStream::new(1, 0),
    )
    .unwrap();
    assert_eq!(calls.get(), 2001);
}

#[test]
fn standard_normal_moments() {
    let target = FnTarget::new(1, |t: &[f64]| -0.5 * t[0] * t[0]);
    let cfg = RunConfig::new(55_000, 15_000, 100);
    let chain = run_chain(
        ParamVec::zeros(1),
        target,
        &cfg,
        1.0,
        &mut RngStream::new(2, 0),
    )
    .unwrap();
    let x = chain.retained_column(0);
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 0.05, "mean {mean}");
    assert!((var - 1.0).abs() < 0.08, "var {var}");
}

#[test]
fn piecewise_constant_target_masses() {
    let masses = [0.2f64, 0.3, 0.5];
    let target = FnTarget::new(1, move |t: &[f64]| {
        if (0.0..3.0).contains(&t[0]) {
            masses[t[0] as usize].ln()
        } else {
            f64::NEG_INFINITY
        }
    });
    let cfg = RunConfig::new(100_000, 5_000, 100);
    let chain = run_chain(
        ParamVec::new(vec![1.5]).unwrap(),
        target,
        &cfg,
        1.0,
        &mut RngStream::new(3, 0),
    )
    .unwrap();
    let x = chain.retained_column(0);
    for (k, p) in masses.iter().enumerate() {
        let f = x.iter().filter(|v| **v as usize == k).count() as f64 / x.len() as f64;
        assert!((f - p).abs() < 0.02, "cell {k}: {f} vs {p}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn acceptance_probability_in_unit_interval(cur in -1e6f64..1e6, prop in -1e6f64..1e6, corr in -50.0f64..50.0) {
        let a = log_accept_prob(cur, prop, corr).exp();
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn refresh_keeps_length_and_range(n in 1usize..500, m in 1usize..50, rho in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0);
        let u: Vec<usize> = (0..m).map(|_| rng.index(n)).collect();
        let v = refresh_indices(&u, n, rho, &mut rng).unwrap();
        prop_assert_eq!(v.len(), m);
        prop_assert!(v.iter().all(|&i| i < n));
        let w = refresh_indices(&u, n, 1.0, &mut rng).unwrap();
        prop_assert_eq!(w, u);
    }

    #[test]
    fn cv_estimate_unbiased_by_enumeration(n in 2usize..6, m in 1usize..3, seed in 0u64..500, t0 in -3.0f64..3.0, t1 in -3.0f64..3.0) {
        let model = generate_logistic(n, &[-2.0, 2.0], &mut RngStream::new(seed, 0)).unwrap();
        let cache = ControlVariateCache::parameter(&model, &[-1.5, 1.5]).unwrap();
        let theta = [t0, t1];
        let mut total = 0.0;
        let mut u = vec![0; m];
        let count = n.pow(m as u32);
        for code in 0..count {
            let mut c = code;
            for slot in u.iter_mut() {
                *slot = c % n;
                c /= n;
            }
            total += cv_estimate(&model, &u, Some(&cache), &theta).unwrap().value;
        }
        let full = model.full_loglik(&theta);
        prop_assert!((total / count as f64 - full).abs() <= 1e-10 * full.abs().max(1.0));
    }

    #[test]
    fn subposteriors_multiply_to_posterior(j in 1usize..8, seed in 0u64..500, t0 in -4.0f64..4.0, t1 in -4.0f64..4.0) {
        let model = generate_logistic(60, &[-2.0, 2.0], &mut RngStream::new(seed, 0)).unwrap();
        let part = partition_indices(60, j, &mut RngStream::new(seed, 1)).unwrap();
        let theta = [t0, t1];
        let sum: f64 = part
            .batches()
            .iter()
            .map(|b| SubposteriorTarget::new(&model, b, j).unwrap().log_density(&theta))
            .sum();
        prop_assert!((sum - model.log_posterior(&theta)).abs() <= 1e-9);
    }

    #[test]
    fn knn_weights_are_nonnegative_and_not_all_zero(ds in prop::collection::vec(0.0f64..10.0, 1..40), taper in any::<bool>()) {
        let nb: Vec<Neighbour> = ds.iter().enumerate().map(|(index, &distance)| Neighbour { index, distance }).collect();
        let scheme = if taper { WeightScheme::LinearTaper } else { WeightScheme::Uniform };
        let w = knn_weights(&nb, scheme);
        prop_assert_eq!(w.len(), nb.len());
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!(w.iter().sum::<f64>() > 0.0);
    }
}
