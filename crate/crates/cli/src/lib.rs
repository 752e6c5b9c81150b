//! `deal`: run, compare and report active-learning experiments with the
//! simulated oracle, or serve labeling sessions for a human oracle.

pub mod config;
pub mod error;
pub mod report;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use deal_core::acquisition::StrategyKind;
use deal_core::data::artifacts::{
    write_atomically, write_curve_csv, write_run_json, DatasetStamp, EnvironmentStamp, RepeatSeeds, RunArtifact,
    RUN_ARTIFACT_SCHEMA_VERSION,
};
use deal_core::data::Dataset;
use deal_core::engine::stats::{reach_summary, ReachSummary};
use deal_core::engine::{paired_t_statistic, run_active_learning, AggregatePoint, PairedTTest, RunConfig, RunRecord, SimulatedOracle};

use config::{load_compare_config, load_run_config, load_serve_config, CompareSection};
pub use error::{exit, CliError};

pub const OUT_DIR_ENV: &str = "DEAL_OUT_DIR";
pub const LOG_ENV: &str = "DEAL_LOG";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Parser)]
#[command(name = "deal", version, about = "Evidential active learning experiments")]
pub struct Cli {
    /// Worker threads for repeats and strategies (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Print errors to stderr as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// Override the config's base_seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one strategy; writes run.json, curve.csv and summary.json.
    Run {
        config: PathBuf,
        #[arg(long, env = OUT_DIR_ENV, default_value = "deal-out")]
        out_dir: PathBuf,
    },
    /// Run every strategy of the [compare] table on shared data and seeds.
    Compare {
        config: PathBuf,
        #[arg(long, env = OUT_DIR_ENV, default_value = "deal-out")]
        out_dir: PathBuf,
    },
    /// Images-to-reach table and learning-curve chart for finished runs.
    Report {
        out_dir: PathBuf,
        /// Target accuracies, comma separated.
        #[arg(long, required = true, value_delimiter = ',')]
        targets: Vec<f64>,
    },
    /// Serve labeling sessions over HTTP.
    Serve {
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        state_dir: Option<PathBuf>,
    },
}

/// Run the parsed command inside a thread pool of `--jobs` workers.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::field("--jobs", "must be at least 1"));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(|e| CliError::runtime(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Run { config, out_dir } => cmd_run(config, out_dir, cli.seed).map(|_| ()),
        Command::Compare { config, out_dir } => cmd_compare(config, out_dir, cli.seed).map(|_| ()),
        Command::Report { out_dir, targets } => {
            let table = cmd_report(out_dir, targets)?;
            print!("{}", table.markdown);
            Ok(())
        }
        Command::Serve { config, bind, state_dir } => cmd_serve(config.as_deref(), bind.as_deref(), state_dir.as_deref()),
    })
}

/// `summary.json` of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: StrategyKind,
    pub acquisition_size: usize,
    pub budget: usize,
    pub num_rounds: usize,
    pub repeats: usize,
    pub complete_repeats: usize,
    /// Mean and population std of test accuracy per round, over complete repeats.
    pub curve: Vec<AggregatePoint>,
    pub reach: Vec<ReachSummary>,
}

fn load_dataset(config: &RunConfig, base_dir: &Path) -> Result<Arc<Dataset>, CliError> {
    config.dataset.load(base_dir).map(Arc::new).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("dataset: {}", err.message);
        err
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomically(path, bytes).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Run all repeats of `config` and write its artifacts into `dir`.
fn run_into(config: &RunConfig, dataset: &Arc<Dataset>, dir: &Path, targets: &[f64]) -> Result<RunSummary, CliError> {
    let oracle = SimulatedOracle::new(dataset.labels().to_vec());
    let outcome = run_active_learning(config, Arc::clone(dataset), &oracle)?;
    let record = outcome.record;
    std::fs::create_dir_all(dir).map_err(|e| io_error_runtime(dir, e))?;

    let mut curve = Vec::new();
    write_curve_csv(&record.repeats, &mut curve)?;
    write_file(&dir.join("curve.csv"), &curve)?;

    let artifact = RunArtifact {
        schema_version: RUN_ARTIFACT_SCHEMA_VERSION,
        config: config.clone(),
        dataset: DatasetStamp::of(dataset),
        seeds: (0..config.repeats).map(|r| RepeatSeeds::derive(config, r, record.num_rounds)).collect(),
        environment: EnvironmentStamp::current(),
        record: record.clone(),
    };
    let mut run = Vec::new();
    write_run_json(&artifact, &mut run)?;
    write_file(&dir.join("run.json"), &run)?;

    let summary = summarize(&record, targets)?;
    write_file(&dir.join("summary.json"), &json_bytes(&summary)?)?;

    if !outcome.incomplete.is_empty() {
        for state in &outcome.incomplete {
            write_file(&dir.join(format!("resume-repeat-{}.json", state.repeat)), &json_bytes(state)?)?;
        }
        return Err(CliError::runtime(format!(
            "{} of {} repeats did not finish; their states are in {}",
            outcome.incomplete.len(),
            config.repeats,
            dir.display()
        )));
    }
    Ok(summary)
}

fn io_error_runtime(path: &Path, e: std::io::Error) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

pub fn summarize(record: &RunRecord, targets: &[f64]) -> Result<RunSummary, CliError> {
    let complete: Vec<_> = record.repeats.iter().filter(|r| r.complete).cloned().collect();
    Ok(RunSummary {
        strategy: record.strategy,
        acquisition_size: record.acquisition_size,
        budget: record.budget,
        num_rounds: record.num_rounds,
        repeats: record.repeats.len(),
        complete_repeats: complete.len(),
        curve: record.aggregate()?,
        reach: targets.iter().map(|&t| reach_summary(&complete, t)).collect::<Result<_, _>>()?,
    })
}

/// Execute a single run. Writes `run.json`, `curve.csv` and `summary.json` into `out_dir`.
pub fn cmd_run(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<RunSummary, CliError> {
    let loaded = load_run_config(config_path, seed)?;
    let dataset = load_dataset(&loaded.config, &loaded.base_dir)?;
    log::info!(
        "{}: {} train / {} validation / {} test samples",
        dataset.provenance.source,
        dataset.split.train.len(),
        dataset.split.validation.len(),
        dataset.split.test.len()
    );
    let summary = run_into(&loaded.config, &dataset, out_dir, &[])?;
    log::info!("wrote {}", out_dir.display());
    Ok(summary)
}

/// One strategy of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparedRun {
    /// Output subdirectory; the strategy name, suffixed when listed twice.
    pub label: String,
    pub strategy: StrategyKind,
    pub curve: Vec<AggregatePoint>,
    pub reach: Vec<ReachSummary>,
}

/// Paired t-test of the reference's mean curve against one baseline's,
/// round by round. Positive `t` favours the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTest {
    pub reference: String,
    pub baseline: String,
    pub test: Option<PairedTTest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// `comparison.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: String,
    pub targets: Vec<f64>,
    pub runs: Vec<ComparedRun>,
    pub t_tests: Vec<BaselineTest>,
}

fn labels_for(strategies: &[StrategyKind]) -> Vec<String> {
    let mut labels = Vec::with_capacity(strategies.len());
    for (i, s) in strategies.iter().enumerate() {
        let seen = strategies[..i].iter().filter(|p| *p == s).count();
        labels.push(if seen == 0 { s.name().to_string() } else { format!("{}-{}", s.name(), seen + 1) });
    }
    labels
}

/// Run each listed strategy on the same dataset and seeds, then compare
/// every other entry against the reference.
pub fn cmd_compare(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<Comparison, CliError> {
    let loaded = load_compare_config(config_path, seed)?;
    let (base, section): &(RunConfig, CompareSection) = &loaded.config;
    let dataset = load_dataset(base, &loaded.base_dir)?;
    let labels = labels_for(&section.strategies);

    let runs: Vec<ComparedRun> = section
        .strategies
        .par_iter()
        .zip(labels.par_iter())
        .map(|(&strategy, label)| {
            let config = RunConfig { strategy, ..base.clone() };
            let summary = run_into(&config, &dataset, &out_dir.join(label), &section.targets)?;
            log::info!("{label}: done");
            Ok(ComparedRun { label: label.clone(), strategy, curve: summary.curve, reach: summary.reach })
        })
        .collect::<Result<_, CliError>>()?;

    let reference_at = section.strategies.iter().position(|s| *s == section.reference()).expect("validated");
    let reference = &runs[reference_at];
    let ours: Vec<f64> = reference.curve.iter().map(|p| p.mean_test_accuracy).collect();
    let t_tests = runs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != reference_at)
        .map(|(_, other)| {
            let theirs: Vec<f64> = other.curve.iter().map(|p| p.mean_test_accuracy).collect();
            let (test, note) = match paired_t_statistic(&ours, &theirs) {
                Ok(t) => (Some(t), None),
                Err(e) => (None, Some(e.to_string())),
            };
            BaselineTest { reference: reference.label.clone(), baseline: other.label.clone(), test, note }
        })
        .collect();

    let comparison =
        Comparison { reference: reference.label.clone(), targets: section.targets.clone(), runs, t_tests };
    write_file(&out_dir.join("comparison.json"), &json_bytes(&comparison)?)?;
    log::info!("wrote {}", out_dir.display());
    Ok(comparison)
}

/// Build the images-to-reach table and chart for the runs in `out_dir`,
/// writing `report.md`, `report.json` and `curves.svg` there.
pub fn cmd_report(out_dir: &Path, targets: &[f64]) -> Result<report::Report, CliError> {
    let report = report::build(out_dir, targets)?;
    write_file(&out_dir.join("report.md"), report.markdown.as_bytes())?;
    write_file(&out_dir.join("report.json"), &json_bytes(&report.table)?)?;
    write_file(&out_dir.join("curves.svg"), report.svg.as_bytes())?;
    Ok(report)
}

pub fn cmd_serve(config: Option<&Path>, bind: Option<&str>, state_dir: Option<&Path>) -> Result<(), CliError> {
    let loaded = match config {
        Some(path) => load_serve_config(path)?,
        None => config::LoadedConfig { config: Default::default(), base_dir: PathBuf::from(".") },
    };
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { loaded.base_dir.join(p) };
    let c = &loaded.config;
    let bind = bind.or(c.bind.as_deref()).unwrap_or(DEFAULT_BIND);
    let addr: std::net::SocketAddr =
        bind.parse().map_err(|e| CliError::field("bind", format!("`{bind}` is not a socket address: {e}")))?;
    let service = deal_service::ServiceConfig {
        base_dir: c.data_dir.as_deref().map(resolve).unwrap_or_else(|| loaded.base_dir.clone()),
        state_dir: state_dir.map(Path::to_path_buf).or_else(|| c.state_dir.as_deref().map(resolve)),
        allowed_origin: c.allowed_origin.clone(),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::runtime(e.to_string()))?;
    runtime.block_on(deal_service::serve(addr, service)).map_err(|e| CliError::runtime(e.to_string()))
}
