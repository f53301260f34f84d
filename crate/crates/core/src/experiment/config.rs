use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::method::Method;
use crate::error::{Error, Result};
use crate::lfree::{DEFAULT_EPSILON_QUANTILE, DEFAULT_PILOT_SIZE};
use crate::models::SV_THETA_TRUE;
use crate::refset::WeightScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Sv,
}

/// What Bias is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    #[default]
    Truth,
    /// Maximum-likelihood estimate; needs a fixed `data` file.
    Mle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(alias = "N")]
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub theta_true: Option<Vec<f64>>,
    /// Logistic CSV (covariates then response); replaces simulated data.
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub reference: Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub name: Option<String>,
    #[serde(default)]
    pub names: Vec<String>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_eps_q")]
    pub epsilon_quantile: f64,
    #[serde(default = "default_pilot")]
    pub pilot_size: usize,
    #[serde(default = "default_sd")]
    pub initial_sd: f64,
    /// Neighbour count for the reference-set methods; default `floor(sqrt(H))`.
    pub knn_k: Option<usize>,
    #[serde(default = "default_weights")]
    pub knn_weights: WeightScheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(alias = "M", default = "default_m")]
    pub iterations: usize,
    #[serde(alias = "B", default = "default_b")]
    pub burn_in: usize,
    #[serde(default = "default_interval")]
    pub adapt_interval: usize,
    #[serde(alias = "R", default = "default_r")]
    pub replicates: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub output: PathBuf,
    /// Run the benchmark sampler alongside the methods.
    #[serde(default = "yes")]
    pub benchmark: bool,
    /// Iteration multiplier of the SV benchmark chain.
    #[serde(default = "default_factor")]
    pub benchmark_factor: usize,
}

fn default_rho() -> f64 {
    0.9999
}
fn default_eps_q() -> f64 {
    DEFAULT_EPSILON_QUANTILE
}
fn default_pilot() -> usize {
    DEFAULT_PILOT_SIZE
}
fn default_sd() -> f64 {
    0.1
}
fn default_weights() -> WeightScheme {
    WeightScheme::Uniform
}
fn default_m() -> usize {
    55_000
}
fn default_b() -> usize {
    15_000
}
fn default_interval() -> usize {
    100
}
fn default_r() -> usize {
    5
}
fn default_seed() -> u64 {
    1
}
fn yes() -> bool {
    true
}
fn default_factor() -> usize {
    4
}

/// A parsed and validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub method: MethodSection,
    pub run: RunSection,
}

const LOGISTIC_THETA_10: [f64; 10] = [-2.0, 2.0, -3.0, 4.0, 1.0, 2.0, -3.0, -4.0, 2.0, 1.0];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Methods in configuration order, without the benchmark.
    pub fn methods(&self) -> Result<Vec<Method>> {
        self.method
            .name
            .iter()
            .chain(&self.method.names)
            .map(|n| n.parse())
            .collect()
    }

    pub fn benchmark(&self) -> Method {
        match self.model.kind {
            ModelKind::Logistic => Method::Rw,
            ModelKind::Sv => Method::AbcReference {
                factor: self.run.benchmark_factor,
            },
        }
    }

    /// Fills defaults that depend on other fields and checks ranges.
    fn resolve(&mut self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        let r = &self.run;
        if r.iterations <= r.burn_in {
            return cfg_err(format!(
                "need M > B, got M={} B={}",
                r.iterations, r.burn_in
            ));
        }
        if r.replicates == 0 {
            return cfg_err("R must be at least 1".into());
        }
        let m = &self.method;
        if !(0.0..=1.0).contains(&m.rho) {
            return cfg_err(format!("rho = {} outside [0, 1]", m.rho));
        }
        if !(m.epsilon_quantile > 0.0 && m.epsilon_quantile <= 1.0) {
            return cfg_err("epsilon_quantile must be in (0, 1]".into());
        }
        if m.pilot_size < 2 {
            return cfg_err("pilot_size must be at least 2".into());
        }
        if !(m.initial_sd > 0.0 && m.initial_sd.is_finite()) {
            return cfg_err("initial_sd must be positive".into());
        }
        if m.knn_k == Some(0) {
            return cfg_err("knn_k must be at least 1".into());
        }
        let methods = self.methods()?;
        if methods.is_empty() && !self.run.benchmark {
            return cfg_err("no methods to run".into());
        }
        let logistic = self.model.kind == ModelKind::Logistic;
        if let Some(bad) = methods.iter().find(|m| m.for_logistic() != logistic) {
            return cfg_err(format!("method {bad} does not apply to this model"));
        }
        self.benchmark().validate()?;

        let model = &mut self.model;
        match model.kind {
            ModelKind::Logistic => {
                if model.data.is_none() {
                    let n = model
                        .n
                        .ok_or_else(|| Error::Config("logistic model needs N".into()))?;
                    if n < 2 {
                        return cfg_err("N must be at least 2".into());
                    }
                }
                if model.theta_true.is_none() && model.data.is_none() {
                    model.theta_true = match model.d.unwrap_or(2) {
                        2 => Some(vec![-2.0, 2.0]),
                        10 => Some(LOGISTIC_THETA_10.iter().map(|v| v / 3.0).collect()),
                        d => return cfg_err(format!("no default theta_true for d = {d}")),
                    };
                }
                if model.reference == Reference::Truth && model.theta_true.is_none() {
                    return cfg_err("reference = \"truth\" needs theta_true".into());
                }
                if model.reference == Reference::Mle && model.data.is_none() {
                    return cfg_err("reference = \"mle\" needs a fixed data file".into());
                }
                if let Some(t) = &model.theta_true {
                    if model.d.is_some_and(|d| d != t.len()) {
                        return cfg_err("d does not match theta_true".into());
                    }
                    if t.len() < 2 {
                        return cfg_err(
                            "logistic model needs d >= 2 (intercept plus covariates)".into(),
                        );
                    }
                    model.d = Some(t.len());
                }
            }
            ModelKind::Sv => {
                let n = model.n.unwrap_or(500);
                if n < 7 {
                    return cfg_err("SV series needs N >= 7".into());
                }
                model.n = Some(n);
                let t = model
                    .theta_true
                    .get_or_insert_with(|| SV_THETA_TRUE.to_vec());
                if t.len() != 3 || !(0.0..1.0).contains(&t[0]) {
                    return cfg_err(
                        "SV theta_true must be (theta_1 in [0,1), theta_2, theta_3)".into(),
                    );
                }
                model.d = Some(3);
                if model.data.is_some() || model.reference == Reference::Mle {
                    return cfg_err(
                        "SV experiments use simulated series and the true parameter".into(),
                    );
                }
            }
        }
        if model.theta_true.iter().flatten().any(|v| !v.is_finite()) {
            return cfg_err("theta_true must be finite".into());
        }
        Ok(())
    }
}
