//! Accuracy and efficiency measures over replicated chains.

use serde::{Deserialize, Serialize};

use crate::diagnostics::ess;
use crate::error::{Error, Result};
use crate::mcmc::Chain;

/// One method's row. `var` and `rmse` are `None` with a single replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub bias2: f64,
    pub var: Option<f64>,
    pub rmse: Option<f64>,
    pub ess_per_cpu: f64,
    pub rel_rmse: Option<f64>,
    pub rel_ess_per_cpu: Option<f64>,
    pub replicates: usize,
}

/// Post-burn-in draws and CPU time of one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateDraws<'a> {
    /// Row-major `n x d`.
    pub samples: &'a [f64],
    pub d: usize,
    pub cpu_seconds: f64,
}

impl<'a> From<&'a Chain> for ReplicateDraws<'a> {
    fn from(c: &'a Chain) -> Self {
        Self {
            samples: c.retained(),
            d: c.d,
            cpu_seconds: c.cpu_seconds,
        }
    }
}

/// `Bias^2 = mean_s (mean_{t,r} theta - theta_true)^2`,
/// `VAR = mean_s var_r(mean_t theta)`, `RMSE = sqrt(Bias^2 + VAR)`,
/// `ESS/cpu = mean_{r,s} ESS^{rs} / CPU^r`.
pub fn compute_metrics(
    method: &str,
    reps: &[ReplicateDraws<'_>],
    theta_true: &[f64],
) -> Result<MetricsRow> {
    let r = reps.len();
    if r == 0 {
        return Err(Error::invalid("metrics need at least one replicate"));
    }
    let d = theta_true.len();
    if reps.iter().any(|x| x.d != d || x.samples.is_empty()) {
        return Err(Error::invalid(
            "replicate dimension does not match theta_true",
        ));
    }
    let mut means = vec![vec![0.0; d]; r];
    let mut grand = vec![0.0; d];
    let mut total_rows = 0usize;
    let mut ess_ratio = 0.0;
    for (k, rep) in reps.iter().enumerate() {
        let n = rep.samples.len() / d;
        total_rows += n;
        let mut col = Vec::with_capacity(n);
        for s in 0..d {
            col.clear();
            col.extend(rep.samples.iter().skip(s).step_by(d));
            let sum: f64 = col.iter().sum();
            means[k][s] = sum / n as f64;
            grand[s] += sum;
            ess_ratio += ess(&col)?.value / rep.cpu_seconds;
        }
    }
    let bias2 = grand
        .iter()
        .zip(theta_true)
        .map(|(g, t)| {
            let m = g / total_rows as f64;
            (m - t) * (m - t)
        })
        .sum::<f64>()
        / d as f64;
    let var = (r >= 2).then(|| {
        (0..d)
            .map(|s| {
                let mu = means.iter().map(|m| m[s]).sum::<f64>() / r as f64;
                means.iter().map(|m| (m[s] - mu).powi(2)).sum::<f64>() / (r - 1) as f64
            })
            .sum::<f64>()
            / d as f64
    });
    Ok(MetricsRow {
        method: method.to_owned(),
        bias2,
        var,
        rmse: var.map(|v| (bias2 + v).sqrt()),
        ess_per_cpu: ess_ratio / (r * d) as f64,
        rel_rmse: None,
        rel_ess_per_cpu: None,
        replicates: r,
    })
}

/// Fills the relative columns of every row against `bench`.
pub fn attach_relative(rows: &mut [MetricsRow], bench: &MetricsRow) {
    for row in rows {
        row.rel_rmse = match (row.rmse, bench.rmse) {
            (Some(a), Some(b)) => Some(a / b),
            _ => None,
        };
        row.rel_ess_per_cpu = Some(row.ess_per_cpu / bench.ess_per_cpu);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn noise(center: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0);
        let raw: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let m = raw.iter().sum::<f64>() / n as f64;
        raw.into_iter().map(|v| v - m + center).collect()
    }

    #[test]
    fn exact_means_give_zero_error() {
        let a = noise(1.0, 500, 1);
        let b = noise(1.0, 500, 2);
        let reps = [
            ReplicateDraws {
                samples: &a,
                d: 1,
                cpu_seconds: 1.0,
            },
            ReplicateDraws {
                samples: &b,
                d: 1,
                cpu_seconds: 2.0,
            },
        ];
        let row = compute_metrics("X", &reps, &[1.0]).unwrap();
        assert!(row.bias2 < 1e-28);
        assert!(row.var.unwrap() < 1e-28);
        assert!(row.rmse.unwrap() < 1e-14);
    }

    #[test]
    fn symmetric_offsets() {
        let a_off = 0.3;
        let a = noise(1.0 - a_off, 400, 3);
        let b = noise(1.0 + a_off, 400, 4);
        let reps = [
            ReplicateDraws {
                samples: &a,
                d: 1,
                cpu_seconds: 1.0,
            },
            ReplicateDraws {
                samples: &b,
                d: 1,
                cpu_seconds: 1.0,
            },
        ];
        let row = compute_metrics("X", &reps, &[1.0]).unwrap();
        assert!(row.bias2 < 1e-24);
        assert!((row.var.unwrap() - 2.0 * a_off * a_off).abs() < 1e-12);
        assert!((row.rmse.unwrap() - a_off * 2f64.sqrt()).abs() < 1e-12);
        let rmse = row.rmse.unwrap();
        assert!((rmse * rmse - row.bias2 - row.var.unwrap()).abs() < 1e-15);
    }

    #[test]
    fn single_replicate_has_no_variance() {
        let a = noise(0.0, 200, 5);
        let row = compute_metrics(
            "X",
            &[ReplicateDraws {
                samples: &a,
                d: 1,
                cpu_seconds: 1.0,
            }],
            &[0.5],
        )
        .unwrap();
        assert!(row.var.is_none() && row.rmse.is_none());
        assert!((row.bias2 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn benchmark_relative_to_itself_is_one() {
        let a = noise(0.1, 200, 6);
        let b = noise(-0.1, 200, 7);
        let reps = [
            ReplicateDraws {
                samples: &a,
                d: 1,
                cpu_seconds: 0.5,
            },
            ReplicateDraws {
                samples: &b,
                d: 1,
                cpu_seconds: 0.7,
            },
        ];
        let bench = compute_metrics("B", &reps, &[0.0]).unwrap();
        let mut rows = vec![bench.clone()];
        attach_relative(&mut rows, &bench);
        assert_eq!(rows[0].rel_rmse, Some(1.0));
        assert_eq!(rows[0].rel_ess_per_cpu, Some(1.0));
    }
}
