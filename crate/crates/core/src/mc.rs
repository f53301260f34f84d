use crate::error::{Error, Result};
use crate::param::ParamVec;

/// Functional `h` whose posterior expectation is estimated componentwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    Mean,
    SecondMoment,
    /// Indicator `1{theta_s <= t}`, i.e. the marginal CDF at `t`.
    CdfAt(f64),
}

impl Functional {
    fn apply(self, x: f64) -> f64 {
        match self {
            Functional::Mean => x,
            Functional::SecondMoment => x * x,
            Functional::CdfAt(t) => f64::from(u8::from(x <= t)),
        }
    }
}

/// Plain Monte Carlo average `(1/m) sum_k h(theta_k)`, per component.
pub fn mc_estimate(samples: &[ParamVec], h: Functional) -> Result<Vec<f64>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("Monte Carlo estimate needs at least one sample"))?;
    let d = first.dim();
    let mut acc = vec![0.0; d];
    for s in samples {
        if s.dim() != d {
            return Err(Error::invalid("samples have inconsistent dimension"));
        }
        for (a, &x) in acc.iter_mut().zip(s.iter()) {
            *a += h.apply(x);
        }
    }
    let m = samples.len() as f64;
    Ok(acc.into_iter().map(|a| a / m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(xs: &[f64]) -> Vec<ParamVec> {
        xs.iter()
            .map(|&x| ParamVec::new(vec![x]).unwrap())
            .collect()
    }

    #[test]
    fn constant_samples() {
        let s = vec![ParamVec::new(vec![2.5, -1.0]).unwrap(); 7];
        assert_eq!(mc_estimate(&s, Functional::Mean).unwrap(), vec![2.5, -1.0]);
    }

    #[test]
    fn second_moment_arithmetic() {
        let v = mc_estimate(&pv(&[1.0, 2.0, 3.0]), Functional::SecondMoment).unwrap();
        assert!((v[0] - 14.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cdf_at_zero() {
        let v = mc_estimate(&pv(&[-1.0, 0.0, 2.0]), Functional::CdfAt(0.0)).unwrap();
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_is_error() {
        assert!(mc_estimate(&[], Functional::Mean).is_err());
    }

    proptest! {
        #[test]
        fn linear_and_permutation_invariant(xs in prop::collection::vec(-100.0f64..100.0, 1..50), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let s = pv(&xs);
            let mean = mc_estimate(&s, Functional::Mean).unwrap()[0];
            let second = mc_estimate(&s, Functional::SecondMoment).unwrap()[0];
            // E[a x + b x^2] computed directly
            let direct = xs.iter().map(|x| a * x + b * x * x).sum::<f64>() / xs.len() as f64;
            prop_assert!((a * mean + b * second - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
            let mut rev = s.clone();
            rev.reverse();
            let mean_rev = mc_estimate(&rev, Functional::Mean).unwrap()[0];
            prop_assert!((mean - mean_rev).abs() <= 1e-12 * (1.0 + mean.abs()));
        }
    }
}
