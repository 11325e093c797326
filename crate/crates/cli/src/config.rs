//! Flat key-value run configuration.
//!
//! Every key can come from three layers: command-line flags, a TOML file
//! passed with `--config`, and built-in defaults that depend on the
//! experiment. Earlier layers win.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use lit_core::datasets::{builtin_2d_cases, builtin_8d_case, Case};
use lit_core::models::Activation;
use lit_core::training::EnsembleConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Case1,
    Case2,
    Case3,
    Toy8d,
    Csv,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Case1 => "case1",
            Experiment::Case2 => "case2",
            Experiment::Case3 => "case3",
            Experiment::Toy8d => "toy8d",
            Experiment::Csv => "csv",
        }
    }

    /// Ground-truth rules and domain; `None` for CSV data.
    pub fn case(self) -> Option<Case> {
        let [c1, c2, c3] = builtin_2d_cases();
        match self {
            Experiment::Case1 => Some(c1),
            Experiment::Case2 => Some(c2),
            Experiment::Case3 => Some(c3),
            Experiment::Toy8d => Some(builtin_8d_case()),
            Experiment::Csv => None,
        }
    }
}

/// Every configurable key. Unset keys are `None` until [`Settings::resolve`].
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// case1 | case2 | case3 | toy8d | csv
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    /// Master seed; all other seeds are derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training-set size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Input file for the csv experiment.
    #[arg(long)]
    pub csv_path: Option<PathBuf>,
    /// Ensemble size.
    #[arg(long = "M", visible_alias = "m")]
    pub m: Option<usize>,
    /// Penalty strength.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub eps_stab: Option<f64>,
    #[arg(long)]
    pub accuracy_epsilon: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub adam_beta1: Option<f64>,
    #[arg(long)]
    pub adam_beta2: Option<f64>,
    #[arg(long)]
    pub adam_eps: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// softplus | relu
    #[arg(long)]
    pub activation: Option<Activation>,
    /// Train one model with no penalty.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub baseline: Option<bool>,
    /// Learning rate of normally trained models.
    #[arg(long)]
    pub baseline_learning_rate: Option<f64>,
    /// Epochs of normally trained models.
    #[arg(long)]
    pub baseline_epochs: Option<usize>,
    /// Uniform samples per single-rule test set.
    #[arg(long)]
    pub n_eval: Option<usize>,
    #[arg(long)]
    pub grid_resolution: Option<usize>,
    /// Samples of the hidden dimensions averaged per projected grid point.
    #[arg(long)]
    pub projection_samples: Option<usize>,
    /// Points per model pair for the mutual-information check.
    #[arg(long)]
    pub mi_points: Option<usize>,
    /// Seeds run by `reproduce`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Cases run by `reproduce fig3`, comma separated.
    #[arg(long, value_delimiter = ',', value_enum)]
    pub cases: Option<Vec<Experiment>>,
    #[arg(long)]
    pub logreg_epochs: Option<usize>,
    #[arg(long)]
    pub logreg_learning_rate: Option<f64>,
    #[arg(long)]
    pub forest_trees: Option<usize>,
    /// Depth limit for trees; unset grows until leaves are pure.
    #[arg(long)]
    pub tree_max_depth: Option<usize>,
}

macro_rules! overlay {
    ($top:expr, $bottom:expr, [$($field:ident),* $(,)?]) => {
        Settings { $($field: $top.$field.or($bottom.$field)),* }
    };
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings always serialize")
    }

    /// Keys set in `self` win over those in `below`.
    pub fn over(self, below: Settings) -> Settings {
        overlay!(self, below, [
            experiment, seed, n, csv_path, m, lambda, eps_stab, accuracy_epsilon,
            learning_rate, adam_beta1, adam_beta2, adam_eps, batch_size, epochs, hidden,
            activation, baseline, baseline_learning_rate, baseline_epochs, n_eval,
            grid_resolution, projection_samples, mi_points, seeds, cases, logreg_epochs,
            logreg_learning_rate, forest_trees, tree_max_depth,
        ])
    }

    /// Built-in values for an experiment.
    pub fn defaults(experiment: Experiment) -> Settings {
        let toy = experiment == Experiment::Toy8d;
        Settings {
            experiment: Some(experiment),
            seed: Some(1),
            n: Some(if toy { 10_000 } else { 2_000 }),
            csv_path: None,
            m: Some(if toy { 4 } else { 2 }),
            lambda: Some(0.1),
            eps_stab: Some(1e-6),
            accuracy_epsilon: Some(0.05),
            learning_rate: Some(if toy { 1e-4 } else { 1e-3 }),
            adam_beta1: Some(0.9),
            adam_beta2: Some(0.999),
            adam_eps: Some(1e-8),
            batch_size: Some(if toy { 32 } else { 128 }),
            epochs: Some(60),
            hidden: Some(vec![256, 256]),
            activation: Some(if toy {
                Activation::Relu
            } else {
                Activation::Softplus
            }),
            baseline: Some(false),
            baseline_learning_rate: Some(1e-3),
            baseline_epochs: None,
            n_eval: Some(lit_core::evaluation::DEFAULT_EVAL_SAMPLES),
            grid_resolution: Some(if toy { 20 } else { 100 }),
            projection_samples: Some(lit_core::evaluation::DEFAULT_PROJECTION_SAMPLES),
            mi_points: Some(4),
            seeds: Some(vec![1, 2, 3, 4, 5]),
            cases: Some(vec![Experiment::Case1, Experiment::Case2, Experiment::Case3]),
            logreg_epochs: Some(100),
            logreg_learning_rate: Some(1e-2),
            forest_trees: Some(100),
            tree_max_depth: None,
        }
    }

    /// Applies `file` and then the defaults of the resulting experiment below `self`.
    pub fn resolve(self, file: Settings, fallback: Experiment) -> Result<Resolved> {
        let merged = self.over(file);
        let experiment = merged.experiment.unwrap_or(fallback);
        let mut s = merged.over(Settings::defaults(experiment));
        if s.baseline_epochs.is_none() {
            s.baseline_epochs = s.epochs;
        }
        let r = Resolved(s);
        r.check()?;
        Ok(r)
    }
}

/// Settings with every key that has a default filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Resolved(pub Settings);

macro_rules! getters {
    ($($name:ident: $ty:ty),* $(,)?) => {
        $(pub fn $name(&self) -> $ty {
            self.0.$name.clone().expect(concat!(stringify!($name), " has a default"))
        })*
    };
}

impl Resolved {
    getters!(
        experiment: Experiment,
        seed: u64,
        n: usize,
        m: usize,
        lambda: f64,
        eps_stab: f64,
        accuracy_epsilon: f64,
        learning_rate: f64,
        adam_beta1: f64,
        adam_beta2: f64,
        adam_eps: f64,
        batch_size: usize,
        epochs: usize,
        hidden: Vec<usize>,
        activation: Activation,
        baseline: bool,
        baseline_learning_rate: f64,
        baseline_epochs: usize,
        n_eval: usize,
        grid_resolution: usize,
        projection_samples: usize,
        mi_points: usize,
        seeds: Vec<u64>,
        cases: Vec<Experiment>,
        logreg_epochs: usize,
        logreg_learning_rate: f64,
        forest_trees: usize,
    );

    pub fn tree_max_depth(&self) -> Option<usize> {
        self.0.tree_max_depth
    }

    pub fn csv_path(&self) -> Option<&Path> {
        self.0.csv_path.as_deref()
    }

    fn check(&self) -> Result<()> {
        if self.experiment() == Experiment::Csv && self.0.csv_path.is_none() {
            return Err(CliError::Usage("experiment csv needs csv_path".into()));
        }
        if self.n() == 0 || self.n_eval() == 0 {
            return Err(CliError::Usage("n and n_eval must be positive".into()));
        }
        if self.grid_resolution() < 2 {
            return Err(CliError::Usage("grid_resolution must be at least 2".into()));
        }
        if self.seeds().is_empty() {
            return Err(CliError::Usage("seeds must not be empty".into()));
        }
        Ok(())
    }

    /// Training settings for a penalized ensemble, or for one normally
    /// trained model when `baseline` is set.
    pub fn ensemble(&self, seed: u64, baseline: bool) -> EnsembleConfig {
        EnsembleConfig {
            m: if baseline { 1 } else { self.m() },
            lambda: if baseline { 0.0 } else { self.lambda() },
            eps_stab: self.eps_stab(),
            accuracy_epsilon: self.accuracy_epsilon(),
            learning_rate: if baseline {
                self.baseline_learning_rate()
            } else {
                self.learning_rate()
            },
            adam_beta1: self.adam_beta1(),
            adam_beta2: self.adam_beta2(),
            adam_eps: self.adam_eps(),
            batch_size: self.batch_size(),
            epochs: if baseline {
                self.baseline_epochs()
            } else {
                self.epochs()
            },
            seed,
            hidden_layers: self.hidden(),
            activation: self.activation(),
        }
    }

    pub fn with_experiment(&self, experiment: Experiment) -> Resolved {
        let mut s = self.0.clone();
        s.experiment = Some(experiment);
        Resolved(s)
    }

    pub fn to_toml(&self) -> String {
        self.0.to_toml()
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form plus `salt`.
    pub fn hash(&self, salt: &str) -> String {
        let json = serde_json::to_string(&self.0).expect("settings always serialize");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        h.update(b"\0");
        h.update(salt.as_bytes());
        hex::encode(h.finalize())[..12].to_string()
    }
}
