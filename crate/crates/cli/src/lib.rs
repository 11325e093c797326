//! Command-line front end for local independence training.
//!
//! ```text
//! lit gen-data  --experiment case1 --n 2000 --seed 1
//! lit train     --experiment case1 --M 2 --lambda 0.1 --seed 1
//! lit eval      --models-dir <train dir> [--baseline-dir <train dir>]
//! lit reproduce fig3 | fig5 | table1
//! ```
//!
//! Exit codes: 0 success, 1 other failure, 2 usage, 3 numerical failure,
//! 4 shape mismatch.

pub mod commands;
pub mod config;
pub mod error;
pub mod reproduce;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Experiment, Resolved, Settings};
use crate::error::{exit, CliError, Result};
use crate::reproduce::Target;

#[derive(Debug, Parser)]
#[command(name = "lit", version, about = "Local independence training of diverse ensembles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML file with any of the keys below; flags win over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parent of all run directories [env: LIT_OUTPUT_DIR; default: lit-output]
    #[arg(long)]
    pub output_root: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a confounded dataset and its provenance sidecar.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train an ensemble, or one normal model with --baseline.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score trained models against the ground-truth rules.
    Eval {
        /// Directory written by `train`.
        #[arg(long)]
        models_dir: PathBuf,
        /// Directory of normally trained models to compare against.
        #[arg(long)]
        baseline_dir: Option<PathBuf>,
        /// Dataset CSV; defaults to the one saved with the models.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a full experiment with shipped settings.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
        #[command(flatten)]
        common: Common,
    },
}

fn file_layer(path: Option<&PathBuf>) -> Result<Settings> {
    path.map_or_else(|| Ok(Settings::default()), |p| Settings::load(p))
}

fn resolve(common: Common, file: Settings, fallback: Experiment) -> Result<(Resolved, PathBuf)> {
    let root = commands::output_root(common.output_root.as_deref());
    Ok((common.settings.resolve(file, fallback)?, root))
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenData { common } => {
            let file = file_layer(common.config.as_ref())?;
            let (cfg, root) = resolve(common, file, Experiment::Case1)?;
            commands::gen_data(&cfg, &root)?;
        }
        Command::Train { common } => {
            let file = file_layer(common.config.as_ref())?;
            let (cfg, root) = resolve(common, file, Experiment::Case1)?;
            commands::train(&cfg, &root)?;
        }
        Command::Eval {
            models_dir,
            baseline_dir,
            data,
            common,
        } => {
            // Without --config, the settings saved by `train` fill the gaps.
            let saved = models_dir.join("config.toml");
            let file = match &common.config {
                Some(p) => Settings::load(p)?,
                None if saved.exists() => Settings::load(&saved)?,
                None => Settings::default(),
            };
            let (cfg, root) = resolve(common, file, Experiment::Case1)?;
            commands::eval(&cfg, &models_dir, baseline_dir.as_deref(), data.as_deref(), &root)?;
        }
        Command::Reproduce { target, common } => {
            let file = match &common.config {
                Some(p) => Settings::load(p)?,
                None => target.shipped_settings()?,
            };
            let (cfg, root) = resolve(common, file, target.default_experiment())?;
            reproduce::reproduce(target, &cfg, &root)?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => exit::OK,
        Err(e) => {
            report(&e);
            e.exit_code()
        }
    }
}

fn report(e: &CliError) {
    eprintln!("error: {e}");
}
