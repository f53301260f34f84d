//! `bayescomp`: run individual samplers, build reference sets, and drive
//! replicated benchmark experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use bayescomp::coreset::{discrepancy_study, logistic_coreset, CoresetTarget, DiscrepancyStudy};
use bayescomp::dac::run_dac;
use bayescomp::data::{partition_indices, Dataset};
use bayescomp::experiment::{report_from_dir, run_experiment, ExperimentConfig};
use bayescomp::lfree::{calibrate, AbcKernel, BslKernel, Calibration};
use bayescomp::mcmc::{run_kernel, Chain, ProposalSpec, RunConfig};
use bayescomp::models::{
    generate_logistic, sv_simulate, ItemLikelihood, LogisticModel, Simulator, SvModel,
};
use bayescomp::refset::{
    build_reference_set, AabcKernel, AbslKernel, KnnConfig, ReferenceSet, WeightScheme,
};
use bayescomp::subsample::{cluster_items, find_mle, ControlVariateCache, SubsampleKernel};
use bayescomp::{Error, ParamVec, RngStream};

#[derive(Parser)]
#[command(
    name = "bayescomp",
    version,
    about = "Approximate MCMC samplers and benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate data from the benchmark models.
    #[command(subcommand)]
    Models(ModelsCmd),
    /// Consensus divide-and-conquer on a logistic dataset.
    Dac(DacArgs),
    /// Subsampling pseudo-marginal MCMC on a logistic dataset.
    Subsample(SubsampleArgs),
    /// Coreset MCMC on a logistic dataset.
    Coreset(CoresetArgs),
    /// Relative coreset discrepancy table (rows f, columns N x d).
    CoresetTable(CoresetTableArgs),
    /// ABC-MCMC on an SV series.
    Abc(AbcArgs),
    /// Synthetic-likelihood MCMC on an SV series.
    Bsl(BslArgs),
    /// Reference sets and the kNN-accelerated samplers.
    #[command(subcommand)]
    Refset(RefsetCmd),
    /// Replicated experiments.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Subcommand)]
enum ModelsCmd {
    /// Uniform covariates plus intercept, Bernoulli responses.
    GenerateLogistic {
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Comma-separated; defaults to (-2, 2) for d = 2.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stochastic volatility series.
    SimulateSv {
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "0.95,-2,-1"
        )]
        theta: Vec<f64>,
        #[arg(long = "N", default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct ChainArgs {
    #[arg(long = "M", default_value_t = 55_000)]
    iterations: usize,
    #[arg(long = "B", default_value_t = 15_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 100)]
    adapt_interval: usize,
    #[arg(long, default_value_t = 0.1)]
    initial_sd: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Chain CSV; a JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

impl ChainArgs {
    fn run_config(&self) -> RunConfig {
        RunConfig::new(self.iterations, self.burn_in, self.adapt_interval)
    }

    fn proposal(&self, d: usize) -> Result<ProposalSpec> {
        Ok(ProposalSpec::isotropic(
            d,
            self.initial_sd * self.initial_sd,
        )?)
    }

    fn rng(&self) -> RngStream {
        RngStream::new(self.seed, 0)
    }
}

#[derive(Args)]
struct DacArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "J")]
    j: usize,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExpansionArg {
    Param,
    Data,
}

#[derive(Clone, Copy, ValueEnum)]
enum IndicesArg {
    Random,
    Correlated,
}

#[derive(Args)]
struct SubsampleArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "param")]
    expansion: ExpansionArg,
    #[arg(long, value_enum, default_value = "random")]
    indices: IndicesArg,
    #[arg(long)]
    m: usize,
    /// Cluster count for data expansion.
    #[arg(long = "K", default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0.9999)]
    rho: f64,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Args)]
struct CoresetArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "K", default_value_t = 4)]
    k: usize,
    #[arg(long)]
    f: f64,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Args)]
struct CoresetTableArgs {
    #[arg(long = "N", value_delimiter = ',', default_value = "1000,10000")]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "2,10")]
    d: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.1,0.05,0.01")]
    f: Vec<f64>,
    #[arg(long = "K", default_value_t = 4)]
    k: usize,
    #[arg(long = "R", default_value_t = 5)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SvArgs {
    /// Observed series CSV (column `y`).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = bayescomp::lfree::DEFAULT_EPSILON_QUANTILE)]
    epsilon_quantile: f64,
    #[arg(long, default_value_t = bayescomp::lfree::DEFAULT_PILOT_SIZE)]
    pilot_size: usize,
    /// Where to write the calibration (scaling, epsilon) as JSON.
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Args)]
struct AbcArgs {
    #[command(flatten)]
    sv: SvArgs,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Args)]
struct BslArgs {
    #[command(flatten)]
    sv: SvArgs,
    #[arg(long = "K", default_value_t = 20)]
    k: usize,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Subcommand)]
enum RefsetCmd {
    /// Simulate a reference set from the SV prior.
    Build {
        #[arg(long = "N", default_value_t = 500)]
        n: usize,
        #[arg(long = "H")]
        h: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// kNN-accelerated ABC on an SV series.
    Aabc(KnnArgs),
    /// kNN-accelerated synthetic likelihood on an SV series.
    Absl(KnnArgs),
}

#[derive(Args)]
struct KnnArgs {
    #[command(flatten)]
    sv: SvArgs,
    /// Initial reference set; defaults to the calibration pilot.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    linear_taper: bool,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Subcommand)]
enum BenchCmd {
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute tables and figures from a finished run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn load_logistic(path: &Path) -> Result<LogisticModel> {
    let data = Dataset::from_csv(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(LogisticModel::from_dataset(&data)?)
}

fn finish(chain: &Chain, args: &ChainArgs, method: &str) -> Result<()> {
    chain.write_csv(&args.out, Some(method))?;
    eprintln!(
        "{method}: {} iterations, acceptance {:.3}, cpu {:.2}s -> {}",
        chain.rows(),
        chain.acceptance_rate(),
        chain.cpu_seconds,
        args.out.display()
    );
    Ok(())
}

fn sv_setup(args: &SvArgs, seed: u64) -> Result<(SvModel, Vec<f64>, Calibration)> {
    let series = Dataset::from_csv(&args.data)
        .with_context(|| format!("reading {}", args.data.display()))?;
    let model = SvModel::new(series.len())?;
    let s0 = model.summarize(&series.response().to_vec());
    let cal = calibrate(
        &model,
        &s0,
        args.pilot_size,
        args.epsilon_quantile,
        &mut RngStream::new(seed, 1),
    )?;
    if let Some(path) = &args.calibration {
        std::fs::write(path, serde_json::to_string_pretty(&cal.artifact())?)?;
    }
    Ok((model, s0, cal))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Models(ModelsCmd::GenerateLogistic {
            n,
            d,
            theta,
            seed,
            out,
        }) => {
            let theta = match theta {
                Some(t) => t,
                None if d == 2 => vec![-2.0, 2.0],
                None => bail!("--theta is required for d = {d}"),
            };
            if theta.len() != d {
                bail!("--theta has {} values, expected d = {d}", theta.len());
            }
            let model = generate_logistic(n, &theta, &mut RngStream::new(seed, 0))?;
            model.to_dataset()?.write_csv(&out)?;
        }
        Command::Models(ModelsCmd::SimulateSv {
            theta,
            n,
            seed,
            out,
        }) => {
            let y = sv_simulate(&theta, n, &mut RngStream::new(seed, 0))?;
            Dataset::series(y)?.write_csv(&out)?;
        }
        Command::Dac(a) => {
            let model = load_logistic(&a.data)?;
            let start = find_mle(&model, &vec![0.0; model.dim()], 100)?;
            let rng = a.chain.rng();
            let partition = partition_indices(model.n_items(), a.j, &mut rng.substream(0))?;
            let out = run_dac(
                &model,
                &partition,
                &start,
                &a.chain.run_config(),
                a.chain.initial_sd,
                &rng.substream(1),
            )?;
            finish(&out.combined, &a.chain, &format!("RW_DAC_{}", a.j))?;
        }
        Command::Subsample(a) => {
            let model = load_logistic(&a.data)?;
            let start = find_mle(&model, &vec![0.0; model.dim()], 100)?;
            let rng = a.chain.rng();
            let cache = match a.expansion {
                ExpansionArg::Param => ControlVariateCache::parameter(&model, &start)?,
                ExpansionArg::Data => {
                    let clustering = cluster_items(&model, a.k, &mut rng.substream(0))?;
                    ControlVariateCache::data(&model, &start, &clustering)?
                }
            };
            let (rho, c) = match a.indices {
                IndicesArg::Random => (0.0, "R"),
                IndicesArg::Correlated => (a.rho, "C"),
            };
            let mut kernel = SubsampleKernel::new(&model, Some(&cache), a.m, rho)?;
            let chain = run_kernel(
                &mut kernel,
                start,
                a.chain.proposal(model.dim())?,
                &a.chain.run_config(),
                &mut rng.substream(1),
            )?;
            let name = match a.expansion {
                ExpansionArg::Param => format!("RW_SS_P_{c}_{}", a.m),
                ExpansionArg::Data => format!("RW_SS_D_{c}_{}_{}", a.k, a.m),
            };
            finish(&chain, &a.chain, &name)?;
        }
        Command::Coreset(a) => {
            let model = load_logistic(&a.data)?;
            if !(a.f > 0.0 && a.f <= 1.0) {
                bail!("--f must lie in (0, 1]");
            }
            let start = find_mle(&model, &vec![0.0; model.dim()], 100)?;
            let rng = a.chain.rng();
            let size = ((a.f * model.n_items() as f64).round() as usize).max(1);
            let (coreset, profile) = logistic_coreset(&model, a.k, size, &mut rng.substream(0))?;
            eprintln!(
                "coreset: {} support points, mean sensitivity {:.3}",
                coreset.support.len(),
                profile.mean_sensitivity
            );
            let target = CoresetTarget {
                model: &model,
                coreset: &coreset,
            };
            let chain = bayescomp::mcmc::run_chain(
                start,
                target,
                &a.chain.run_config(),
                a.chain.initial_sd,
                &mut rng.substream(1),
            )?;
            finish(&chain, &a.chain, &format!("RW_CO_{}_{}", a.k, a.f))?;
        }
        Command::CoresetTable(a) => {
            let study = DiscrepancyStudy {
                k: a.k,
                fractions: a.f.clone(),
                replicates: a.replicates,
                seed: a.seed,
                ..DiscrepancyStudy::default()
            };
            let mut columns = Vec::new();
            for &n in &a.n {
                for &d in &a.d {
                    let theta = default_logistic_theta(d)?;
                    columns.push((
                        format!("N={n} d={d}"),
                        discrepancy_study(n, &theta, &study)?,
                    ));
                }
            }
            ensure_parent(&a.out)?;
            let mut header = vec!["f".to_owned()];
            header.extend(columns.iter().map(|c| c.0.clone()));
            let mut lines = vec![header.join(",")];
            for (i, f) in a.f.iter().enumerate() {
                let mut row = vec![f.to_string()];
                row.extend(columns.iter().map(|c| c.1[i].to_string()));
                lines.push(row.join(","));
            }
            std::fs::write(&a.out, lines.join("\n") + "\n")?;
        }
        Command::Abc(a) => {
            let (model, s0, cal) = sv_setup(&a.sv, a.chain.seed)?;
            let start = cal.pilot_theta[cal.closest_pilot()].clone();
            let mut kernel = AbcKernel::new(&model, &cal.distance, &s0);
            let chain = run_kernel(
                &mut kernel,
                start,
                a.chain.proposal(3)?,
                &a.chain.run_config(),
                &mut a.chain.rng(),
            )?;
            finish(&chain, &a.chain, "RW_ABC")?;
        }
        Command::Bsl(a) => {
            let (model, s0, cal) = sv_setup(&a.sv, a.chain.seed)?;
            let start = cal.pilot_theta[cal.closest_pilot()].clone();
            let mut kernel = BslKernel::new(&model, a.k, &s0)?;
            let chain = run_kernel(
                &mut kernel,
                start,
                a.chain.proposal(3)?,
                &a.chain.run_config(),
                &mut a.chain.rng(),
            )?;
            finish(&chain, &a.chain, &format!("RW_BSL_{}", a.k))?;
        }
        Command::Refset(RefsetCmd::Build { n, h, m, seed, out }) => {
            let model = SvModel::new(n)?;
            let z = build_reference_set(
                |r| model.sample_prior(r),
                &model,
                h,
                m,
                &RngStream::new(seed, 0),
            )?;
            z.write_csv(&out, seed)?;
        }
        Command::Refset(cmd @ (RefsetCmd::Aabc(_) | RefsetCmd::Absl(_))) => {
            let (a, abc) = match &cmd {
                RefsetCmd::Aabc(a) => (a, true),
                RefsetCmd::Absl(a) => (a, false),
                RefsetCmd::Build { .. } => unreachable!(),
            };
            let (model, s0, cal) = sv_setup(&a.sv, a.chain.seed)?;
            let z = match &a.reference {
                Some(path) => ReferenceSet::read_csv(path)?.0,
                None => {
                    let mut z = ReferenceSet::new(3, model.summary_dim(), 1)?;
                    for (t, s) in cal.pilot_theta.iter().zip(&cal.pilot_summaries) {
                        z.push(t, std::slice::from_ref(s))?;
                    }
                    z
                }
            };
            let knn = KnnConfig {
                k: a.k,
                weights: if a.linear_taper {
                    WeightScheme::LinearTaper
                } else {
                    WeightScheme::Uniform
                },
            };
            let start: ParamVec = cal.pilot_theta[cal.closest_pilot()].clone();
            let (prop, rc, mut rng) = (a.chain.proposal(3)?, a.chain.run_config(), a.chain.rng());
            let chain = if abc {
                run_kernel(
                    &mut AabcKernel::new(&model, &cal.distance, &s0, z, knn)?,
                    start,
                    prop,
                    &rc,
                    &mut rng,
                )?
            } else {
                run_kernel(
                    &mut AbslKernel::new(&model, &s0, z, knn)?,
                    start,
                    prop,
                    &rc,
                    &mut rng,
                )?
            };
            finish(&chain, &a.chain, if abc { "RW_AABC" } else { "RW_ABSL" })?;
        }
        Command::Bench(BenchCmd::Run { config }) => {
            let cfg = match ExperimentConfig::from_file(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return Ok(ExitCode::from(1));
                }
            };
            let report = run_experiment(&cfg)?;
            print_rows(&report.rows);
            let failed = report.manifest.failures.len();
            if failed > 0 {
                eprintln!("{failed} of {} runs failed", report.manifest.total_runs);
            }
            return Ok(ExitCode::from(report.exit_code() as u8));
        }
        Command::Bench(BenchCmd::Report { dir }) => {
            let report = report_from_dir(&dir)?;
            print_rows(&report.rows);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn default_logistic_theta(d: usize) -> Result<Vec<f64>> {
    Ok(match d {
        2 => vec![-2.0, 2.0],
        10 => [-2.0, 2.0, -3.0, 4.0, 1.0, 2.0, -3.0, -4.0, 2.0, 1.0]
            .iter()
            .map(|v| v / 3.0)
            .collect(),
        _ => bail!("no default theta_true for d = {d}"),
    })
}

fn print_rows(rows: &[bayescomp::metrics::MetricsRow]) {
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.4}"));
    println!(
        "{:<22} {:>12} {:>12} {:>12} {:>10} {:>12}",
        "method", "rmse", "ess/cpu", "rel_rmse", "rel_ess", "bias2"
    );
    for r in rows {
        println!(
            "{:<22} {:>12} {:>12.2} {:>12} {:>10} {:>12.3e}",
            r.method,
            f(r.rmse),
            r.ess_per_cpu,
            f(r.rel_rmse),
            f(r.rel_ess_per_cpu),
            r.bias2
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e
                .downcast_ref::<Error>()
                .is_some_and(|e| matches!(e, Error::Config(_) | Error::InvalidArgument(_)));
            ExitCode::from(if config { 1 } else { 3 })
        }
    }
}
