use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelKind};
use super::runner::{ExperimentReport, ReplicateFailure};
use crate::error::{Error, Result};
use crate::mcmc::Chain;
use crate::metrics::{attach_relative, compute_metrics, MetricsRow, ReplicateDraws};

/// Written as `experiment.json`; enough to recompute every table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub model: ModelKind,
    pub benchmark: Option<String>,
    pub methods: Vec<String>,
    /// Parameter the Bias is measured against.
    pub reference: Vec<f64>,
    pub replicates: usize,
    pub total_runs: usize,
    pub failures: Vec<ReplicateFailure>,
}

impl ExperimentManifest {
    fn ordered_methods(&self) -> impl Iterator<Item = &String> {
        self.benchmark.iter().chain(&self.methods)
    }
}

const METRICS_HEADER: [&str; 7] = [
    "method",
    "bias2",
    "var",
    "rmse",
    "ess_per_cpu",
    "rel_rmse",
    "rel_ess_per_cpu",
];

fn chain_path(dir: &Path, method: &str, r: usize) -> PathBuf {
    dir.join("chains").join(method).join(format!("rep{r}.csv"))
}

pub(crate) fn write_chains(
    dir: &Path,
    chains: &BTreeMap<String, Vec<(usize, Chain)>>,
) -> Result<()> {
    for (method, reps) in chains {
        for (r, chain) in reps {
            chain.write_csv(chain_path(dir, method, *r), Some(method))?;
        }
    }
    Ok(())
}

/// One row per method with at least one successful replicate, benchmark
/// first, relative columns filled when the benchmark row exists.
pub(crate) fn compute_rows(
    manifest: &ExperimentManifest,
    chains: &BTreeMap<String, Vec<(usize, Chain)>>,
) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for method in manifest.ordered_methods() {
        let Some(reps) = chains.get(method) else {
            continue;
        };
        let mut reps: Vec<&(usize, Chain)> = reps.iter().collect();
        reps.sort_by_key(|(r, _)| *r);
        let draws: Vec<ReplicateDraws<'_>> = reps.iter().map(|(_, c)| c.into()).collect();
        rows.push(compute_metrics(method, &draws, &manifest.reference)?);
    }
    if let Some(bench) = manifest
        .benchmark
        .as_ref()
        .and_then(|b| rows.iter().find(|r| &r.method == b).cloned())
    {
        attach_relative(&mut rows, &bench);
    }
    Ok(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.bias2.to_string(),
            fmt_opt(r.var),
            fmt_opt(r.rmse),
            r.ess_per_cpu.to_string(),
            fmt_opt(r.rel_rmse),
            fmt_opt(r.rel_ess_per_cpu),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a metrics CSV back; the replicate count is not stored and is 0.
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let mut rd = csv::Reader::from_path(path.as_ref())?;
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::invalid(format!("bad number {s:?}")))
        }
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != METRICS_HEADER.len() {
            return Err(Error::invalid("metrics row has the wrong width"));
        }
        rows.push(MetricsRow {
            method: rec[0].to_owned(),
            bias2: num(&rec[1])?.unwrap_or(f64::NAN),
            var: num(&rec[2])?,
            rmse: num(&rec[3])?,
            ess_per_cpu: num(&rec[4])?.unwrap_or(f64::NAN),
            rel_rmse: num(&rec[5])?,
            rel_ess_per_cpu: num(&rec[6])?,
            replicates: 0,
        });
    }
    Ok(rows)
}

fn write_relative_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "rel_rmse", "rel_ess_per_cpu"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            fmt_opt(r.rel_rmse),
            fmt_opt(r.rel_ess_per_cpu),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Two stacked bar panels, relative RMSE on top and relative ESS/cpu below,
/// each with a dashed line at 1.
pub fn render_svg(rows: &[MetricsRow], title: &str) -> String {
    let bars: Vec<&MetricsRow> = rows
        .iter()
        .filter(|r| r.rel_ess_per_cpu.is_some())
        .collect();
    let (left, bar_w, gap, panel_h, top) = (70.0, 36.0, 18.0, 180.0, 40.0);
    let width = left + 20.0 + bars.len().max(1) as f64 * (bar_w + gap);
    let label_h = 110.0;
    let height = top + 2.0 * (panel_h + label_h);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="20" font-size="14" text-anchor="middle">{}</text>"#,
        width / 2.0,
        xml_escape(title)
    );
    let panels: [(&str, fn(&MetricsRow) -> Option<f64>); 2] = [
        ("Relative RMSE", |r| r.rel_rmse),
        ("Relative ESS/cpu", |r| r.rel_ess_per_cpu),
    ];
    for (p, (label, value)) in panels.iter().enumerate() {
        let y0 = top + p as f64 * (panel_h + label_h);
        let base = y0 + panel_h;
        let max = bars
            .iter()
            .filter_map(|r| value(r))
            .filter(|v| v.is_finite())
            .fold(1.0f64, f64::max)
            * 1.1;
        let scale = |v: f64| base - (v / max) * panel_h;
        let _ = writeln!(
            svg,
            r#"<text x="12" y="{:.1}" transform="rotate(-90 12 {:.1})" text-anchor="middle">{label}</text>"#,
            y0 + panel_h / 2.0,
            y0 + panel_h / 2.0
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{left}" y1="{y0:.1}" x2="{left}" y2="{base:.1}" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{left}" y1="{base:.1}" x2="{:.1}" y2="{base:.1}" stroke="black"/>"#,
            width - 10.0
        );
        for tick in 0..=4 {
            let v = max * tick as f64 / 4.0;
            let y = scale(v);
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
                left - 4.0,
                y + 4.0
            );
        }
        for (i, r) in bars.iter().enumerate() {
            let x = left + gap / 2.0 + i as f64 * (bar_w + gap);
            if let Some(v) = value(r).filter(|v| v.is_finite()) {
                let y = scale(v);
                let _ = writeln!(
                    svg,
                    r##"<rect x="{x:.1}" y="{y:.1}" width="{bar_w}" height="{:.1}" fill="#4a7ebb"><title>{} {v:.4}</title></rect>"##,
                    base - y,
                    xml_escape(&r.method)
                );
            }
            let lx = x + bar_w / 2.0;
            let ly = base + 12.0;
            let _ = writeln!(
                svg,
                r#"<text x="{lx:.1}" y="{ly:.1}" transform="rotate(45 {lx:.1} {ly:.1})">{}</text>"#,
                xml_escape(&r.method)
            );
        }
        let one = scale(1.0);
        let _ = writeln!(
            svg,
            r#"<line x1="{left}" y1="{one:.1}" x2="{:.1}" y2="{one:.1}" stroke="black" stroke-dasharray="6,4"/>"#,
            width - 10.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn write_report_md(path: &Path, manifest: &ExperimentManifest, rows: &[MetricsRow]) -> Result<()> {
    let mut s = String::from("# Experiment report\n\n");
    match (&manifest.benchmark, manifest.model) {
        (Some(b), ModelKind::Logistic) => {
            let _ = writeln!(s, "Benchmark: `{b}`, full-data adaptive random-walk Metropolis. Relative columns divide by its row.\n");
        }
        (Some(b), ModelKind::Sv) => {
            let _ = writeln!(s, "Benchmark: `{b}`, a long ABC-MCMC run with the same tolerance. Relative columns divide by its row.\n");
        }
        (None, _) => s.push_str("No benchmark was run; relative columns are empty.\n\n"),
    }
    let _ = writeln!(
        s,
        "Replicates: {}. Failed runs: {} of {}.\n",
        manifest.replicates,
        manifest.failures.len(),
        manifest.total_runs
    );
    s.push_str("| method | Bias^2 | VAR | RMSE | ESS/cpu | rel. RMSE | rel. ESS/cpu |\n|---|---|---|---|---|---|---|\n");
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.4e}"));
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.method,
            f(Some(r.bias2)),
            f(r.var),
            f(r.rmse),
            f(Some(r.ess_per_cpu)),
            f(r.rel_rmse),
            f(r.rel_ess_per_cpu)
        );
    }
    if !manifest.failures.is_empty() {
        s.push_str("\n## Failures\n\n");
        for x in &manifest.failures {
            let _ = writeln!(s, "- {} replicate {}: {}", x.method, x.replicate, x.message);
        }
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Writes `metrics.csv`, `relative.csv`, `figures/relative.svg`,
/// `report.md`, `experiment.json` and, when given, `config.toml`.
pub fn write_outputs(
    dir: &Path,
    manifest: &ExperimentManifest,
    rows: &[MetricsRow],
    cfg: Option<&ExperimentConfig>,
) -> Result<()> {
    let figures = dir.join("figures");
    fs::create_dir_all(&figures).map_err(|e| Error::io(&figures, e))?;
    write_metrics_csv(dir.join("metrics.csv"), rows)?;
    write_relative_csv(&dir.join("relative.csv"), rows)?;
    let svg_path = figures.join("relative.svg");
    let title = format!(
        "{:?} model: performance relative to the benchmark",
        manifest.model
    );
    fs::write(&svg_path, render_svg(rows, &title)).map_err(|e| Error::io(&svg_path, e))?;
    write_report_md(&dir.join("report.md"), manifest, rows)?;
    let mpath = dir.join("experiment.json");
    let f = File::create(&mpath).map_err(|e| Error::io(&mpath, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), manifest)?;
    if let Some(cfg) = cfg {
        let cpath = dir.join("config.toml");
        fs::write(&cpath, cfg.to_toml()?).map_err(|e| Error::io(&cpath, e))?;
    }
    Ok(())
}

/// Recomputes every table and figure from the chain files under `dir`.
pub fn report_from_dir(dir: impl AsRef<Path>) -> Result<ExperimentReport> {
    let dir = dir.as_ref();
    let mpath = dir.join("experiment.json");
    let manifest: ExperimentManifest = {
        let f = File::open(&mpath).map_err(|e| Error::io(&mpath, e))?;
        serde_json::from_reader(BufReader::new(f))?
    };
    let mut chains: BTreeMap<String, Vec<(usize, Chain)>> = BTreeMap::new();
    for method in manifest.ordered_methods() {
        for r in 0..manifest.replicates {
            let path = chain_path(dir, method, r);
            if path.exists() {
                chains
                    .entry(method.clone())
                    .or_default()
                    .push((r, Chain::read_csv(&path)?));
            }
        }
    }
    let rows = compute_rows(&manifest, &chains)?;
    write_outputs(dir, &manifest, &rows, None)?;
    Ok(ExperimentReport { manifest, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, rmse: f64, ess: f64) -> MetricsRow {
        MetricsRow {
            method: method.into(),
            bias2: rmse * rmse / 2.0,
            var: Some(rmse * rmse / 2.0),
            rmse: Some(rmse),
            ess_per_cpu: ess,
            rel_rmse: None,
            rel_ess_per_cpu: None,
            replicates: 2,
        }
    }

    #[test]
    fn metrics_csv_round_trip() {
        let mut rows = vec![row("RW", 0.1, 50.0), row("RW_SS_P_R_20", 0.3, 500.0)];
        let bench = rows[0].clone();
        attach_relative(&mut rows, &bench);
        rows.push(MetricsRow {
            var: None,
            rmse: None,
            rel_rmse: None,
            ..row("ONE", 1.0, 1.0)
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics_csv(&path, &rows).unwrap();
        let back = read_metrics_csv(&path).unwrap();
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(
                MetricsRow {
                    replicates: 0,
                    ..a.clone()
                },
                *b
            );
        }
        assert_eq!(back[0].rel_rmse, Some(1.0));
        assert_eq!(back[0].rel_ess_per_cpu, Some(1.0));
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("method,bias2,var,rmse,ess_per_cpu,rel_rmse,rel_ess_per_cpu\n"));
    }

    #[test]
    fn svg_has_both_panels_and_reference_lines() {
        let mut rows = vec![row("RW", 0.1, 50.0), row("A<B", 0.3, 500.0)];
        let bench = rows[0].clone();
        attach_relative(&mut rows, &bench);
        let svg = render_svg(&rows, "t");
        assert_eq!(svg.matches("stroke-dasharray").count(), 2);
        assert_eq!(svg.matches("<rect").count(), 4);
        assert!(svg.contains("A&lt;B"));
    }
}
