//! Command-line harness for the gait asymmetry pipeline: dataset
//! simulation, per-measurement analysis, feature tables, model selection and
//! leave-one-subject-out evaluation.

// `!(a < b)` deliberately treats NaN as invalid
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod table;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use gaitasym::exec::Exec;
use gaitasym::model::Scenario;

use crate::commands::Context;
use crate::config::PipelineConfig;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "gaitasym", version, about = "Detect asymmetric gait in CW-radar micro-Doppler recordings")]
pub struct Cli {
    /// Pipeline configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed for simulation; overrides `cohort.master_seed`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a cohort into measurement files plus `manifest.csv`.
    Simulate,
    /// Analyse one measurement: spectrogram, gait statistics, step images and feature row.
    Analyze {
        measurement: PathBuf,
        /// Infer the walking direction from the Doppler sign instead of the file header.
        #[arg(long)]
        infer_direction: bool,
    },
    /// Gait statistics of one measurement as JSON.
    Gaitstats {
        measurement: PathBuf,
        #[arg(long)]
        infer_direction: bool,
    },
    /// Four-step window and registered step images (PGM) with a JSON sidecar.
    Steps {
        measurement: PathBuf,
        #[arg(long)]
        infer_direction: bool,
    },
    /// Feature table for every measurement in a dataset manifest.
    Features {
        manifest: PathBuf,
        #[arg(long)]
        infer_direction: bool,
    },
    /// Exhaustive BIC model selection and fit for one scenario.
    Select {
        table: PathBuf,
        /// toward, away or both; defaults to `model.scenario`.
        #[arg(long)]
        scenario: Option<Scenario>,
    },
    /// Leave-one-subject-out evaluation with report and ROC data.
    Evaluate {
        table: PathBuf,
        /// Comma-separated subjects to hold out in turn; defaults to all.
        #[arg(long, value_delimiter = ',')]
        held_out: Vec<String>,
        /// Comma-separated scenarios; defaults to `model.evaluate`.
        #[arg(long, value_delimiter = ',')]
        scenario: Vec<Scenario>,
    },
}

fn execute(cli: &Cli) -> Result<()> {
    let mut config = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.cohort.master_seed = seed;
    }
    let exec = if cli.jobs == 1 { Exec::Sequential } else { Exec::Parallel };
    let ctx = Context {
        config,
        out: cli.out.clone(),
        jobs: cli.jobs,
        exec,
    };
    in_pool(cli.jobs, || match &cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Analyze { measurement, infer_direction } => commands::analyze(&ctx, measurement, *infer_direction),
        Command::Gaitstats { measurement, infer_direction } => commands::gaitstats(&ctx, measurement, *infer_direction),
        Command::Steps { measurement, infer_direction } => commands::steps(&ctx, measurement, *infer_direction),
        Command::Features { manifest, infer_direction } => commands::features(&ctx, manifest, *infer_direction),
        Command::Select { table, scenario } => commands::select(&ctx, table, *scenario),
        Command::Evaluate { table, held_out, scenario } => commands::evaluate(&ctx, table, held_out, scenario),
    })
}

/// Runs `f` on a pool of `jobs` workers (`0` keeps the global pool).
#[cfg(feature = "parallel")]
fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if jobs <= 1 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| error::CliError::Validation(format!("--jobs {jobs}: {e}")))?
        .install(f)
}

#[cfg(not(feature = "parallel"))]
fn in_pool<T: Send>(_jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    f()
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("gaitasym: {e}");
            e.exit_code()
        }
    }
}
