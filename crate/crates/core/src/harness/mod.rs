//! Experiment runner: JSON configuration, seeded parallel trials, CSV data
//! and a JSON manifest per run.
//!
//! Every random draw comes from a ChaCha20 stream derived from the master
//! seed. Objects shared by all trials (the spectrum, and the decomposition
//! where there is only one) use [`SHARED_STREAM`]; trial `t` uses stream `t`;
//! the `i`-th scaling set of a sweep uses stream `((i + 1) << 32) + t`.
//! Trials are mapped over a worker pool and collected in trial order, so
//! output does not depend on the number of workers.

mod config;
mod experiments;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

pub use config::{ConfigIssue, ExperimentConfig, ExperimentKind, InitialState, Thresholds};
pub use output::{format_float, Cell, Table};

use crate::error::{Error, Result};
use crate::rng::{derivation, SHARED_STREAM};

/// Stream offset of the `i`-th scaling set in a sweep.
pub fn scaling_stream(set: usize, trial: usize) -> u64 {
    (((set as u64) + 1) << 32) + trial as u64
}

/// Execution settings that must not affect results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    /// Overrides `output_dir` from the configuration.
    pub out_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1, out_dir: None }
    }
}

/// Outcome of one acceptance check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// How the random streams of a run were derived.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedDerivation {
    pub master_seed: u64,
    pub shared: String,
    pub trial: String,
    pub scaling: String,
}

impl SeedDerivation {
    fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            shared: derivation(master_seed, SHARED_STREAM),
            trial: format!("chacha20(seed_from_u64({master_seed}), stream=<trial>)"),
            scaling: format!("chacha20(seed_from_u64({master_seed}), stream=((<set> + 1) << 32) + <trial>)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub experiment_seconds: f64,
    pub total_seconds: f64,
}

/// Everything needed to trace a run back to its inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultManifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub workers: usize,
    pub seeds: SeedDerivation,
    pub checks: Vec<Check>,
    pub summary: serde_json::Value,
    pub outputs: Vec<String>,
    pub timings: Timings,
}

impl ResultManifest {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Result of an experiment before it is written out.
pub(crate) struct Outcome {
    pub table: Table,
    pub checks: Vec<Check>,
    pub summary: serde_json::Value,
}

fn output_dir(config: &ExperimentConfig, options: &RunOptions) -> PathBuf {
    options.out_dir.clone().or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

/// Runs the configured experiment and writes `<out>/<kind>.csv` and
/// `<out>/manifest.json`.
pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<ResultManifest> {
    let started = Instant::now();
    config.ensure_valid()?;
    if options.workers == 0 {
        return Err(Error::Config { path: "workers".into(), message: "must be >= 1".into() });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))?;

    let outcome = pool.install(|| experiments::execute(config))?;
    let experiment_seconds = started.elapsed().as_secs_f64();

    let dir = output_dir(config, options);
    std::fs::create_dir_all(&dir)?;
    let csv_name = format!("{}.csv", config.kind.name());
    outcome.table.write(&dir.join(&csv_name))?;

    let mut manifest = ResultManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        workers: options.workers,
        seeds: SeedDerivation::new(config.master_seed),
        checks: outcome.checks,
        summary: outcome.summary,
        outputs: vec![csv_name, "manifest.json".into()],
        timings: Timings { experiment_seconds, total_seconds: 0.0 },
    };
    manifest.timings.total_seconds = started.elapsed().as_secs_f64();
    output::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Loads and runs a configuration file.
pub fn run_file(path: &Path, options: &RunOptions) -> Result<ResultManifest> {
    run(&ExperimentConfig::load(path)?, options)
}

/// CSV columns per experiment kind.
pub const CSV_COLUMNS: &str = "\
CSV columns by experiment kind:
  normality      nu, d, f, msd, time_mean, time_variance, theorem_margin
  sweep          dim, trial, stream, max_f, theorem_condition, min_fraction_random,
                 min_fraction_block, max_msd_gap, normal
  concentration  nu, d, sample_count, empirical_mean, empirical_variance,
                 standard_error, variance_bound, exact_variance
  entropy        t, S, S_over_klogD
  quantifier     decomposition, trial, nu, f, msd
  recurrence     time, deviation
  equilibrium    label, stream, fraction_good_times, threshold, verdict
Floats are written with 17 significant digits; booleans as 0/1.";
