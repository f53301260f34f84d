use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelKind, Reference};
use super::method::Method;
use super::report::{compute_rows, write_chains, write_outputs, ExperimentManifest};
use crate::coreset::{logistic_coreset, CoresetTarget};
use crate::cputime::CpuTimer;
use crate::dac::run_dac;
use crate::data::{partition_indices, Dataset};
use crate::error::{Error, Result};
use crate::lfree::{calibrate, AbcKernel, BslKernel, Calibration};
use crate::mcmc::{run_chain, run_kernel, Chain, FnTarget, ProposalSpec, RunConfig};
use crate::metrics::MetricsRow;
use crate::models::{generate_logistic, ItemLikelihood, LogisticModel, Simulator, SvModel};
use crate::param::ParamVec;
use crate::refset::{AabcKernel, AbslKernel, KnnConfig, ReferenceSet};
use crate::rng::RngStream;
use crate::subsample::{cluster_items, find_mle, ControlVariateCache, Expansion, SubsampleKernel};

const MLE_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub method: String,
    pub replicate: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub manifest: ExperimentManifest,
    pub rows: Vec<MetricsRow>,
}

impl ExperimentReport {
    pub fn failure_fraction(&self) -> f64 {
        let m = &self.manifest;
        m.failures.len() as f64 / m.total_runs.max(1) as f64
    }

    /// 0 on success, 2 when more than 10% of runs failed.
    pub fn exit_code(&self) -> i32 {
        if self.failure_fraction() > 0.1 {
            2
        } else {
            0
        }
    }
}

enum Context {
    Logistic {
        model: LogisticModel,
        start: ParamVec,
        mle_cpu: f64,
    },
    Sv {
        model: SvModel,
        s0: Vec<f64>,
        calibration: Calibration,
        start: ParamVec,
    },
}

/// FNV-1a, so a method's stream depends only on its name.
fn name_stream(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn replicate_context(
    cfg: &ExperimentConfig,
    fixed: Option<&LogisticModel>,
    r: usize,
) -> Result<Context> {
    let master = RngStream::new(cfg.run.seed, r as u64);
    let mut data_rng = master.substream(0);
    let theta_true = cfg.model.theta_true.as_deref();
    match cfg.model.kind {
        ModelKind::Logistic => {
            let model = match fixed {
                Some(m) => m.clone(),
                None => generate_logistic(
                    cfg.model.n.unwrap_or_default(),
                    theta_true.unwrap_or_default(),
                    &mut data_rng,
                )?,
            };
            let timer = CpuTimer::start();
            let start = find_mle(&model, &vec![0.0; model.dim()], MLE_MAX_ITER)?;
            Ok(Context::Logistic {
                model,
                start,
                mle_cpu: timer.elapsed(),
            })
        }
        ModelKind::Sv => {
            let model = SvModel::new(cfg.model.n.unwrap_or(500))?;
            let y = model.simulate(theta_true.unwrap_or_default(), &mut data_rng)?;
            let s0 = model.summarize(&y);
            let calibration = calibrate(
                &model,
                &s0,
                cfg.method.pilot_size,
                cfg.method.epsilon_quantile,
                &mut master.substream(1),
            )?;
            let start = calibration.pilot_theta[calibration.closest_pilot()].clone();
            Ok(Context::Sv {
                model,
                s0,
                calibration,
                start,
            })
        }
    }
}

fn pilot_reference(cal: &Calibration, d: usize, p: usize) -> Result<ReferenceSet> {
    let mut z = ReferenceSet::new(d, p, 1)?;
    for (theta, s) in cal.pilot_theta.iter().zip(&cal.pilot_summaries) {
        z.push(theta, std::slice::from_ref(s))?;
    }
    Ok(z)
}

fn run_method(
    cfg: &ExperimentConfig,
    ctx: &Context,
    method: &Method,
    rng: &RngStream,
) -> Result<Chain> {
    let run = &cfg.run;
    let rc = RunConfig::new(run.iterations, run.burn_in, run.adapt_interval);
    let sd = cfg.method.initial_sd;
    let mut chain_rng = rng.substream(1);
    let mut setup_rng = rng.substream(0);
    match (ctx, method) {
        (Context::Logistic { model, start, .. }, Method::Rw) => {
            let target = FnTarget::new(model.dim(), |t: &[f64]| model.log_posterior(t));
            run_chain(start.clone(), target, &rc, sd, &mut chain_rng)
        }
        (Context::Logistic { model, start, .. }, Method::Dac { j }) => {
            let partition = partition_indices(model.n_items(), *j, &mut setup_rng)?;
            Ok(run_dac(model, &partition, start, &rc, sd, &rng.substream(1))?.combined)
        }
        (
            Context::Logistic {
                model,
                start,
                mle_cpu,
            },
            Method::Subsample {
                expansion,
                correlated,
                k,
                m,
            },
        ) => {
            let timer = CpuTimer::start();
            let cache = match expansion {
                Expansion::Parameter => ControlVariateCache::parameter(model, start)?,
                Expansion::Data => {
                    let clustering = cluster_items(model, *k, &mut setup_rng)?;
                    ControlVariateCache::data(model, start, &clustering)?
                }
            };
            let setup = timer.elapsed() + mle_cpu;
            let rho = if *correlated { cfg.method.rho } else { 0.0 };
            let mut kernel = SubsampleKernel::new(model, Some(&cache), *m, rho)?;
            let proposal = ProposalSpec::isotropic(model.dim(), sd * sd)?;
            let mut chain = run_kernel(&mut kernel, start.clone(), proposal, &rc, &mut chain_rng)?;
            chain.cpu_seconds += setup;
            Ok(chain)
        }
        (Context::Logistic { model, start, .. }, Method::Coreset { k, f }) => {
            let timer = CpuTimer::start();
            let size = ((f * model.n_items() as f64).round() as usize).max(1);
            let (coreset, _) = logistic_coreset(model, *k, size, &mut setup_rng)?;
            let setup = timer.elapsed();
            let target = CoresetTarget {
                model,
                coreset: &coreset,
            };
            let mut chain = run_chain(start.clone(), target, &rc, sd, &mut chain_rng)?;
            chain.cpu_seconds += setup;
            Ok(chain)
        }
        (
            Context::Sv {
                model,
                s0,
                calibration,
                start,
            },
            _,
        ) => {
            let proposal = ProposalSpec::isotropic(3, sd * sd)?;
            let knn = KnnConfig {
                k: cfg.method.knn_k,
                weights: cfg.method.knn_weights,
            };
            let dist = &calibration.distance;
            let start = start.clone();
            match method {
                Method::Abc => run_kernel(
                    &mut AbcKernel::new(model, dist, s0),
                    start,
                    proposal,
                    &rc,
                    &mut chain_rng,
                ),
                Method::AbcReference { factor } => {
                    let long =
                        RunConfig::new(run.iterations * factor, run.burn_in, run.adapt_interval);
                    run_kernel(
                        &mut AbcKernel::new(model, dist, s0),
                        start,
                        proposal,
                        &long,
                        &mut chain_rng,
                    )
                }
                Method::Bsl { m } => {
                    let mut kernel = BslKernel::new(model, *m, s0)?;
                    run_kernel(&mut kernel, start, proposal, &rc, &mut chain_rng)
                }
                Method::Aabc => {
                    let z = pilot_reference(calibration, 3, model.summary_dim())?;
                    let mut kernel = AabcKernel::new(model, dist, s0, z, knn)?;
                    run_kernel(&mut kernel, start, proposal, &rc, &mut chain_rng)
                }
                Method::Absl => {
                    let z = pilot_reference(calibration, 3, model.summary_dim())?;
                    let mut kernel = AbslKernel::new(model, s0, z, knn)?;
                    run_kernel(&mut kernel, start, proposal, &rc, &mut chain_rng)
                }
                other => Err(Error::Config(format!(
                    "method {other} does not apply to the SV model"
                ))),
            }
        }
        (Context::Logistic { .. }, other) => Err(Error::Config(format!(
            "method {other} does not apply to the logistic model"
        ))),
    }
}

/// Runs every method (and the benchmark) on `R` replicates, writes chains,
/// metrics and figures under `run.output`, and returns the metrics.
///
/// Replicate `r` uses master stream `(seed, r)`; each method draws from a
/// substream keyed by its name, so results do not depend on execution order
/// or on which other methods are configured. A failing run is recorded and
/// skipped.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let methods = cfg.methods()?;
    let benchmark = cfg.run.benchmark.then(|| cfg.benchmark());
    let all: Vec<Method> = benchmark
        .iter()
        .cloned()
        .chain(methods.iter().cloned())
        .collect();
    let fixed = match &cfg.model.data {
        Some(path) => Some(LogisticModel::from_dataset(&Dataset::from_csv(path)?)?),
        None => None,
    };
    let contexts: Vec<Result<Context>> = (0..cfg.run.replicates)
        .into_par_iter()
        .map(|r| replicate_context(cfg, fixed.as_ref(), r))
        .collect();

    let reference = match cfg.model.reference {
        Reference::Truth => cfg.model.theta_true.clone().unwrap_or_default(),
        Reference::Mle => {
            let model = fixed
                .as_ref()
                .ok_or_else(|| Error::Config("MLE reference needs data".into()))?;
            find_mle(model, &vec![0.0; model.dim()], MLE_MAX_ITER)?.to_vec()
        }
    };

    let jobs: Vec<(usize, usize)> = (0..cfg.run.replicates)
        .flat_map(|r| (0..all.len()).map(move |k| (r, k)))
        .collect();
    let results: Vec<(usize, usize, Result<Chain>)> = jobs
        .into_par_iter()
        .map(|(r, k)| {
            let method = &all[k];
            let name = method.to_string();
            let out = match &contexts[r] {
                Ok(ctx) => {
                    let rng = RngStream::new(cfg.run.seed, r as u64).substream(name_stream(&name));
                    run_method(cfg, ctx, method, &rng)
                }
                Err(e) => Err(Error::Aborted(format!("replicate setup failed: {e}"))),
            };
            if let Err(e) = &out {
                log::warn!("{name} replicate {r} failed: {e}");
            }
            (r, k, out)
        })
        .collect();

    let mut failures = Vec::new();
    let mut chains: BTreeMap<String, Vec<(usize, Chain)>> = BTreeMap::new();
    for (r, k, out) in results {
        let name = all[k].to_string();
        match out {
            Ok(chain) => chains.entry(name).or_default().push((r, chain)),
            Err(e) => failures.push(ReplicateFailure {
                method: name,
                replicate: r,
                message: e.to_string(),
            }),
        }
    }
    let manifest = ExperimentManifest {
        model: cfg.model.kind,
        benchmark: benchmark.map(|b| b.to_string()),
        methods: methods.iter().map(Method::to_string).collect(),
        reference,
        replicates: cfg.run.replicates,
        total_runs: all.len() * cfg.run.replicates,
        failures,
    };
    let dir = &cfg.run.output;
    write_chains(dir, &chains)?;
    let rows = compute_rows(&manifest, &chains)?;
    write_outputs(dir, &manifest, &rows, Some(cfg))?;
    Ok(ExperimentReport { manifest, rows })
}
