use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::stats::quantile;
use crate::models::Simulator;
use crate::param::ParamVec;
use crate::rng::RngStream;

pub const DEFAULT_PILOT_SIZE: usize = 2000;
pub const DEFAULT_EPSILON_QUANTILE: f64 = 0.05;

/// Scaled Euclidean distance between summaries and an acceptance threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSpec {
    pub scaling: Vec<f64>,
    pub epsilon: f64,
}

impl DistanceSpec {
    pub fn new(scaling: Vec<f64>, epsilon: f64) -> Result<Self> {
        if scaling.is_empty() || scaling.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(
                "distance scales must be positive and finite",
            ));
        }
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(Error::invalid("epsilon must be non-negative"));
        }
        Ok(Self { scaling, epsilon })
    }

    pub fn unscaled(p: usize, epsilon: f64) -> Result<Self> {
        Self::new(vec![1.0; p], epsilon)
    }

    pub fn distance(&self, s: &[f64], s0: &[f64]) -> f64 {
        s.iter()
            .zip(s0)
            .zip(&self.scaling)
            .map(|((a, b), c)| ((a - b) / c).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn accepts(&self, s: &[f64], s0: &[f64]) -> bool {
        self.distance(s, s0) <= self.epsilon
    }
}

/// Componentwise median absolute deviation; zero MADs fall back to the
/// standard deviation, then to 1.
pub fn mad_scaling(summaries: &[Vec<f64>]) -> Result<Vec<f64>> {
    let p = summaries
        .first()
        .ok_or_else(|| Error::invalid("no pilot summaries"))?
        .len();
    let mut out = Vec::with_capacity(p);
    let mut col = Vec::with_capacity(summaries.len());
    for j in 0..p {
        col.clear();
        col.extend(summaries.iter().map(|s| s[j]));
        let med = quantile(&col, 0.5)?;
        let dev: Vec<f64> = col.iter().map(|v| (v - med).abs()).collect();
        let mut scale = quantile(&dev, 0.5)?;
        if !(scale > 0.0) {
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            scale = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        }
        if !(scale > 0.0 && scale.is_finite()) {
            scale = 1.0;
        }
        out.push(scale);
    }
    Ok(out)
}

/// Pilot prior-predictive draws with the distance they imply.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub distance: DistanceSpec,
    pub epsilon_quantile: f64,
    pub pilot_theta: Vec<ParamVec>,
    pub pilot_summaries: Vec<Vec<f64>>,
    pub pilot_distances: Vec<f64>,
}

/// Serialisable part of a [`Calibration`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub scaling: Vec<f64>,
    pub epsilon: f64,
    pub epsilon_quantile: f64,
    pub pilot_size: usize,
}

impl Calibration {
    pub fn artifact(&self) -> CalibrationArtifact {
        CalibrationArtifact {
            scaling: self.distance.scaling.clone(),
            epsilon: self.distance.epsilon,
            epsilon_quantile: self.epsilon_quantile,
            pilot_size: self.pilot_theta.len(),
        }
    }

    /// Index of the pilot draw whose summary is nearest `s0`.
    pub fn closest_pilot(&self) -> usize {
        self.pilot_distances
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i)
    }
}

/// Simulates `pilot_size` prior-predictive summaries, scales by their MAD,
/// and sets epsilon to the `epsilon_quantile` quantile of pilot distances
/// to `s0`.
pub fn calibrate<S: Simulator + ?Sized>(
    model: &S,
    s0: &[f64],
    pilot_size: usize,
    epsilon_quantile: f64,
    rng: &mut RngStream,
) -> Result<Calibration> {
    if pilot_size < 2 {
        return Err(Error::invalid("pilot needs at least two simulations"));
    }
    if !(0.0..=1.0).contains(&epsilon_quantile) {
        return Err(Error::invalid("epsilon quantile outside [0, 1]"));
    }
    let mut pilot_theta = Vec::with_capacity(pilot_size);
    let mut pilot_summaries = Vec::with_capacity(pilot_size);
    for _ in 0..pilot_size {
        let theta = model.sample_prior(rng);
        let s = model.simulate_summary(&theta, rng)?;
        pilot_theta.push(theta);
        pilot_summaries.push(s);
    }
    let scaling = mad_scaling(&pilot_summaries)?;
    let unit = DistanceSpec::new(scaling.clone(), 0.0)?;
    let pilot_distances: Vec<f64> = pilot_summaries
        .iter()
        .map(|s| unit.distance(s, s0))
        .collect();
    let epsilon = quantile(&pilot_distances, epsilon_quantile)?;
    Ok(Calibration {
        distance: DistanceSpec::new(scaling, epsilon)?,
        epsilon_quantile,
        pilot_theta,
        pilot_summaries,
        pilot_distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::toy::GaussianSummaryToy;
    use proptest::prelude::*;

    #[test]
    fn mad_of_known_sample() {
        let s: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0, 100.0]
            .iter()
            .map(|v| vec![*v, 5.0])
            .collect();
        let m = mad_scaling(&s).unwrap();
        assert_eq!(m[0], 1.0);
        assert_eq!(m[1], 1.0);
    }

    #[test]
    fn calibration_hits_requested_fraction() {
        let toy = GaussianSummaryToy {
            n: 10,
            prior_var: 4.0,
        };
        let cal = calibrate(&toy, &[0.3], 2000, 0.05, &mut RngStream::new(1, 0)).unwrap();
        let inside = cal
            .pilot_distances
            .iter()
            .filter(|&&d| d <= cal.distance.epsilon)
            .count();
        assert!((inside as f64 / 2000.0 - 0.05).abs() < 0.002);
        let best = cal.closest_pilot();
        assert!(cal
            .pilot_distances
            .iter()
            .all(|&d| d >= cal.pilot_distances[best]));
    }

    proptest! {
        #[test]
        fn metric_axioms(
            a in proptest::collection::vec(-1e3..1e3f64, 3),
            b in proptest::collection::vec(-1e3..1e3f64, 3),
            c in proptest::collection::vec(-1e3..1e3f64, 3),
            sc in proptest::collection::vec(0.01..10.0f64, 3),
        ) {
            let d = DistanceSpec::new(sc, 1.0).unwrap();
            prop_assert!(d.distance(&a, &b) >= 0.0);
            prop_assert_eq!(d.distance(&a, &a), 0.0);
            prop_assert!((d.distance(&a, &b) - d.distance(&b, &a)).abs() < 1e-12);
            prop_assert!(d.distance(&a, &c) <= d.distance(&a, &b) + d.distance(&b, &c) + 1e-9);
        }
    }
}
