use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::ParamVec;

/// Proposal covariance installed at `iteration`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationRecord {
    pub iteration: usize,
    pub covariance: Vec<f64>,
}

/// Counters accumulated by the runner and by kernels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub nonfinite_proposals: usize,
    pub degenerate_steps: usize,
    /// Likelihood-term evaluations; filled in by kernels that count them.
    pub likelihood_evaluations: usize,
    /// Model simulations; filled in by likelihood-free kernels.
    pub simulations: usize,
}

/// Recorded output of one run: `M` rows, one per transition.
#[derive(Debug, Clone)]
pub struct Chain {
    pub d: usize,
    /// Row-major `M x d` states.
    pub samples: Vec<f64>,
    pub accept_flags: Vec<bool>,
    pub burn_in: usize,
    pub cpu_seconds: f64,
    pub adaptation_log: Vec<AdaptationRecord>,
    pub stats: ChainStats,
    pub seed: u64,
    pub stream_id: u64,
    pub final_proposal: Vec<f64>,
}

/// JSON sidecar written next to a chain CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMetadata {
    pub iterations: usize,
    pub burn_in: usize,
    pub dim: usize,
    pub seed: u64,
    pub stream_id: u64,
    pub cpu_seconds: f64,
    pub acceptance_rate: f64,
    pub stats: ChainStats,
    pub adaptation_log: Vec<AdaptationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

impl Chain {
    pub fn rows(&self) -> usize {
        self.accept_flags.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.samples[t * self.d..(t + 1) * self.d]
    }

    /// Rows `B..M`, row-major.
    pub fn retained(&self) -> &[f64] {
        &self.samples[self.burn_in.min(self.rows()) * self.d..]
    }

    pub fn retained_rows(&self) -> usize {
        self.rows().saturating_sub(self.burn_in)
    }

    pub fn retained_params(&self) -> Vec<ParamVec> {
        self.retained()
            .chunks(self.d)
            .map(|r| ParamVec::from_unchecked(r.to_vec()))
            .collect()
    }

    /// Component `s` of the retained rows.
    pub fn retained_column(&self, s: usize) -> Vec<f64> {
        self.retained().chunks(self.d).map(|r| r[s]).collect()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accept_flags.is_empty() {
            return 0.0;
        }
        self.accept_flags.iter().filter(|&&a| a).count() as f64 / self.rows() as f64
    }

    pub fn metadata(&self, method: Option<&str>) -> ChainMetadata {
        ChainMetadata {
            iterations: self.rows(),
            burn_in: self.burn_in,
            dim: self.d,
            seed: self.seed,
            stream_id: self.stream_id,
            cpu_seconds: self.cpu_seconds,
            acceptance_rate: self.acceptance_rate(),
            stats: self.stats.clone(),
            adaptation_log: self.adaptation_log.clone(),
            method: method.map(str::to_owned),
        }
    }

    /// CSV body with header `iter,accepted,theta_1,...,theta_d`.
    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        let io = |e| Error::io("<chain csv>", e);
        let mut header = String::from("iter,accepted");
        for s in 1..=self.d {
            header.push_str(&format!(",theta_{s}"));
        }
        writeln!(w, "{header}").map_err(io)?;
        for t in 0..self.rows() {
            let mut line = format!("{},{}", t + 1, u8::from(self.accept_flags[t]));
            for v in self.row(t) {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Writes `path` and the sidecar `path` with extension `.json`.
    pub fn write_csv(&self, path: impl AsRef<Path>, method: Option<&str>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(f)?;
        let side = sidecar_path(path);
        let f = File::create(&side).map_err(|e| Error::io(&side, e))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &self.metadata(method))?;
        Ok(())
    }

    /// Reads a chain written by [`Chain::write_csv`], including its sidecar.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side = sidecar_path(path);
        let meta: ChainMetadata = {
            let f = File::open(&side).map_err(|e| Error::io(&side, e))?;
            serde_json::from_reader(BufReader::new(f))?
        };
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("empty chain file"))?
            .map_err(|e| Error::io(path, e))?;
        let d = header.split(',').count().saturating_sub(2);
        if d != meta.dim {
            return Err(Error::invalid(format!(
                "chain header has {d} parameters, sidecar says {}",
                meta.dim
            )));
        }
        let mut samples = Vec::new();
        let mut accept_flags = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            fields.next();
            let acc = fields
                .next()
                .ok_or_else(|| Error::invalid("short chain row"))?;
            accept_flags.push(acc == "1");
            let before = samples.len();
            for f in fields {
                samples.push(
                    f.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad number {f:?} in chain")))?,
                );
            }
            if samples.len() - before != d {
                return Err(Error::invalid("ragged chain row"));
            }
        }
        Ok(Chain {
            d,
            samples,
            accept_flags,
            burn_in: meta.burn_in,
            cpu_seconds: meta.cpu_seconds,
            adaptation_log: meta.adaptation_log,
            stats: meta.stats,
            seed: meta.seed,
            stream_id: meta.stream_id,
            final_proposal: Vec::new(),
        })
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}
