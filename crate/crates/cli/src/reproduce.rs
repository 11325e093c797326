//! End-to-end reproduction targets: `fig3`, `fig5` and `table1`.
//!
//! Each target writes one directory holding every trained model, the grids,
//! `summary.json` and `summary.md`. Nothing in the tree depends on wall-clock
//! time, so identical settings give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use lit_core::datasets::{gen_confounded, Case, Dataset};
use lit_core::evaluation::{
    agreement_matrix, build_report, cos2_stats, mean_off_diagonal, GridSpec, Matching,
};
use lit_core::models::{
    accuracy, Classifier, DecisionTree, ForestConfig, LogOddsModel, MlpParams, RandomForest,
    TreeParams,
};
use lit_core::rng::{derive_seed, Stream};
use lit_core::training::{train_ensemble, EnsembleConfig, TrainedEnsemble};
use serde::{Deserialize, Serialize};

use crate::commands::{
    create_dir, grid_file_name, grid_specs, report_spec, run_dir, save_training, write_grid,
    write_json, write_text,
};
use crate::config::{Experiment, Resolved, Settings};
use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Fig3,
    Fig5,
    Table1,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Fig3 => "fig3",
            Target::Fig5 => "fig5",
            Target::Table1 => "table1",
        }
    }

    /// Shipped settings used when no `--config` is given.
    pub fn shipped_config(self) -> &'static str {
        match self {
            Target::Fig3 => include_str!("../../../configs/fig3.toml"),
            Target::Fig5 => include_str!("../../../configs/fig5.toml"),
            Target::Table1 => include_str!("../../../configs/table1.toml"),
        }
    }

    pub fn default_experiment(self) -> Experiment {
        match self {
            Target::Fig3 => Experiment::Case1,
            Target::Fig5 | Target::Table1 => Experiment::Toy8d,
        }
    }

    pub fn shipped_settings(self) -> Result<Settings> {
        Settings::from_toml(self.shipped_config())
    }
}

pub enum Outcome {
    Fig3(Fig3Summary),
    Fig5(Fig5Summary),
    Table1(Table1Summary),
}

pub struct ReproduceOutput {
    pub dir: PathBuf,
    pub outcome: Outcome,
}

pub fn reproduce(target: Target, cfg: &Resolved, root: &Path) -> Result<ReproduceOutput> {
    let dir = run_dir(root, &format!("reproduce-{}", target.name()), cfg, "")?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    let (outcome, markdown) = match target {
        Target::Fig3 => {
            let s = fig3(cfg, &dir)?;
            write_json(&dir.join("summary.json"), &s)?;
            let md = s.to_markdown();
            (Outcome::Fig3(s), md)
        }
        Target::Fig5 => {
            let s = fig5(cfg, &dir)?;
            write_json(&dir.join("summary.json"), &s)?;
            let md = s.to_markdown();
            (Outcome::Fig5(s), md)
        }
        Target::Table1 => {
            let s = table1(cfg, &dir)?;
            write_json(&dir.join("summary.json"), &s)?;
            let md = s.to_markdown();
            (Outcome::Table1(s), md)
        }
    };
    write_text(&dir.join("summary.md"), &markdown)?;
    print!("{markdown}");
    println!("{}", dir.display());
    Ok(ReproduceOutput { dir, outcome })
}

fn case_of(experiment: Experiment) -> Result<Case> {
    experiment
        .case()
        .ok_or_else(|| CliError::Usage(format!("{} has no ground-truth rules", experiment.name())))
}

fn dataset_for(case: &Case, n: usize, seed: u64) -> Result<Dataset> {
    Ok(gen_confounded(&case.rules, &case.domain, n, derive_seed(seed, Stream::Data, 0))?)
}

fn train_into(data: &Dataset, config: &EnsembleConfig, dir: &Path) -> Result<TrainedEnsemble> {
    let trained = train_ensemble(data, config)?;
    save_training(&trained, config, dir)?;
    Ok(trained)
}

fn classifiers(models: &[MlpParams]) -> Vec<&dyn Classifier> {
    models.iter().map(|m| m as &dyn Classifier).collect()
}

/// Mean pairwise `cos²` over the training points.
fn training_cos2(models: &[MlpParams], data: &Dataset, eps_stab: f64) -> Result<f64> {
    let scorers: Vec<&dyn LogOddsModel> = models.iter().map(|m| m as &dyn LogOddsModel).collect();
    Ok(mean_off_diagonal(&cos2_stats(&scorers, data.x(), data.dim(), eps_stab)?))
}

fn train_accuracies(models: &[MlpParams], data: &Dataset) -> Vec<f64> {
    models.iter().map(|m| accuracy(m, data.x(), data.y())).collect()
}

fn fmt_row(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" | ")
}

fn fmt_cell(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" / ")
}

/// Models ordered by the rule they are matched to.
fn in_rule_order(matching: &Matching) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..matching.assignment.len()).collect();
    idx.sort_by_key(|&i| matching.assignment[i]);
    idx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig3Run {
    pub case: String,
    pub seed: u64,
    pub rule_names: Vec<String>,
    /// Agreement of the normally trained model with each rule.
    pub normal_agreement: Vec<f64>,
    pub normal_train_accuracy: f64,
    /// `agreement[m][k]` for the penalized pair.
    pub diverse_agreement: Vec<Vec<f64>>,
    pub matching: Matching,
    /// Agreement of the model matched to each model, in model order.
    pub matched_agreement: Vec<f64>,
    pub diverse_train_accuracy: Vec<f64>,
    pub diverse_cos2: f64,
    /// Same seeds as the diverse pair, with `λ = 0`.
    pub control_cos2: f64,
    pub oversize_flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig3Summary {
    pub runs: Vec<Fig3Run>,
    pub grids: Vec<String>,
}

pub fn fig3(cfg: &Resolved, dir: &Path) -> Result<Fig3Summary> {
    let mut runs = Vec::new();
    let mut grids = Vec::new();
    let grid_dir = dir.join("grids");
    create_dir(&grid_dir)?;
    for experiment in cfg.cases() {
        let case = case_of(experiment)?;
        if case.domain.dim() != 2 {
            return Err(CliError::Usage(format!("fig3 cases are two-dimensional, got {}", case.name)));
        }
        let ccfg = cfg.with_experiment(experiment);
        for (i, &seed) in cfg.seeds().iter().enumerate() {
            log::info!("fig3 {} seed {seed}", case.name);
            let data = dataset_for(&case, ccfg.n(), seed)?;
            let run = dir.join(&case.name).join(format!("seed-{seed}"));
            create_dir(&run)?;
            data.save_csv(&run.join("data.csv"))?;

            let normal = train_into(&data, &ccfg.ensemble(seed, true), &run.join("normal"))?;
            let diverse_cfg = ccfg.ensemble(seed, false);
            let diverse = train_into(&data, &diverse_cfg, &run.join("diverse"))?;
            let control_cfg = EnsembleConfig {
                lambda: 0.0,
                ..diverse_cfg.clone()
            };
            let control = train_into(&data, &control_cfg, &run.join("control"))?;

            let eval_seed = derive_seed(seed, Stream::Eval, 1);
            let report = build_report(
                &diverse.models,
                &case.rules,
                &data,
                &case.domain,
                &report_spec(&ccfg, &case.domain),
                eval_seed,
            )?;
            write_json(&run.join("diverse").join("report.json"), &report)?;
            let normal_agreement = agreement_matrix(
                &classifiers(&normal.models),
                &case.rules,
                &case.domain,
                ccfg.n_eval(),
                eval_seed,
            )?
            .remove(0);
            let matching = report
                .matching
                .clone()
                .ok_or_else(|| CliError::Usage("fig3 needs M equal to the number of rules".into()))?;

            if i == 0 {
                let grid_seed = derive_seed(seed, Stream::Eval, 2);
                let spec = GridSpec::plane(ccfg.grid_resolution());
                let mut named = vec![("normal".to_string(), &normal.models[0])];
                for (rank, &m) in in_rule_order(&matching).iter().enumerate() {
                    named.push((format!("diverse_{}", rank + 1), &diverse.models[m]));
                }
                for (label, model) in named {
                    let name = grid_file_name(&format!("{}_{label}", case.name), &spec, 2);
                    write_grid(model, &case.domain, &spec, grid_seed, &grid_dir.join(&name), &label)?;
                    grids.push(format!("grids/{name}"));
                }
            }

            runs.push(Fig3Run {
                case: case.name.clone(),
                seed,
                rule_names: report.rule_names.clone(),
                normal_agreement,
                normal_train_accuracy: train_accuracies(&normal.models, &data)[0],
                diverse_agreement: report.agreement.clone(),
                matched_agreement: report.matched_agreement.clone().unwrap_or_default(),
                matching,
                diverse_train_accuracy: report.train_accuracy.clone(),
                diverse_cos2: mean_off_diagonal(&report.mean_cos2),
                control_cos2: training_cos2(&control.models, &data, ccfg.eps_stab())?,
                oversize_flagged: save_flag(&diverse, &diverse_cfg),
            });
        }
    }
    Ok(Fig3Summary { runs, grids })
}

fn save_flag(trained: &TrainedEnsemble, config: &EnsembleConfig) -> bool {
    lit_core::training::m_oversize_diagnostic(&trained.history, config).flagged
}

impl Fig3Summary {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| Case | Seed | Normal agreement | Diverse (matched) agreement | Diverse cos² | λ=0 cos² |\n\
             |---|---|---|---|---|---|\n",
        );
        for r in &self.runs {
            let by_rule: Vec<f64> = in_rule_order(&r.matching)
                .iter()
                .map(|&m| r.diverse_agreement[m][r.matching.assignment[m]])
                .collect();
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.4} | {:.4} |",
                r.case,
                r.seed,
                fmt_cell(&r.normal_agreement),
                fmt_cell(&by_rule),
                r.diverse_cos2,
                r.control_cos2
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig5Run {
    pub seed: u64,
    pub normal_agreement: Vec<f64>,
    pub normal_train_accuracy: f64,
    pub diverse_agreement: Vec<Vec<f64>>,
    pub matching: Matching,
    pub matched_agreement: Vec<f64>,
    pub mean_matched_agreement: f64,
    pub diverse_train_accuracy: Vec<f64>,
    pub diverse_cos2: f64,
    pub oversize_flagged: bool,
}

impl Fig5Run {
    /// Matched agreement of the model assigned to each rule, in rule order.
    pub fn agreement_by_rule(&self) -> Vec<f64> {
        in_rule_order(&self.matching)
            .iter()
            .map(|&m| self.diverse_agreement[m][self.matching.assignment[m]])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig5Summary {
    pub rule_names: Vec<String>,
    pub runs: Vec<Fig5Run>,
    pub grids: Vec<String>,
}

pub fn fig5(cfg: &Resolved, dir: &Path) -> Result<Fig5Summary> {
    let case = case_of(cfg.experiment())?;
    let grid_dir = dir.join("grids");
    create_dir(&grid_dir)?;
    let mut runs = Vec::new();
    let mut grids = Vec::new();
    for (i, &seed) in cfg.seeds().iter().enumerate() {
        log::info!("fig5 seed {seed}");
        let data = dataset_for(&case, cfg.n(), seed)?;
        let run = dir.join(format!("seed-{seed}"));
        create_dir(&run)?;
        data.save_csv(&run.join("data.csv"))?;
        let normal = train_into(&data, &cfg.ensemble(seed, true), &run.join("normal"))?;
        let diverse_cfg = cfg.ensemble(seed, false);
        let diverse = train_into(&data, &diverse_cfg, &run.join("diverse"))?;

        let eval_seed = derive_seed(seed, Stream::Eval, 1);
        let report = build_report(
            &diverse.models,
            &case.rules,
            &data,
            &case.domain,
            &report_spec(cfg, &case.domain),
            eval_seed,
        )?;
        write_json(&run.join("diverse").join("report.json"), &report)?;
        let normal_agreement = agreement_matrix(
            &classifiers(&normal.models),
            &case.rules,
            &case.domain,
            cfg.n_eval(),
            eval_seed,
        )?
        .remove(0);
        let matching = report
            .matching
            .clone()
            .ok_or_else(|| CliError::Usage("fig5 needs M equal to the number of rules".into()))?;
        let matched = report.matched_agreement.clone().unwrap_or_default();

        if i == 0 {
            let grid_seed = derive_seed(seed, Stream::Eval, 2);
            let mut named = vec![("normal".to_string(), &normal.models[0])];
            for (rank, &m) in in_rule_order(&matching).iter().enumerate() {
                named.push((format!("diverse_{}", rank + 1), &diverse.models[m]));
            }
            for (label, model) in named {
                for spec in grid_specs(cfg, case.domain.dim(), &case.rules) {
                    let name = grid_file_name(&label, &spec, case.domain.dim());
                    write_grid(model, &case.domain, &spec, grid_seed, &grid_dir.join(&name), &label)?;
                    grids.push(format!("grids/{name}"));
                }
            }
        }

        runs.push(Fig5Run {
            seed,
            normal_agreement,
            normal_train_accuracy: train_accuracies(&normal.models, &data)[0],
            diverse_agreement: report.agreement.clone(),
            mean_matched_agreement: matched.iter().sum::<f64>() / matched.len().max(1) as f64,
            matched_agreement: matched,
            matching,
            diverse_train_accuracy: report.train_accuracy.clone(),
            diverse_cos2: mean_off_diagonal(&report.mean_cos2),
            oversize_flagged: save_flag(&diverse, &diverse_cfg),
        });
    }
    Ok(Fig5Summary {
        rule_names: case.rules.iter().map(|r| r.name.clone()).collect(),
        runs,
        grids,
    })
}

impl Fig5Summary {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Seed | Model | Train |");
        for r in &self.rule_names {
            let _ = write!(out, " {r} |");
        }
        out.push_str("\n|---|---|---|");
        out.push_str(&"---|".repeat(self.rule_names.len()));
        out.push('\n');
        for r in &self.runs {
            let _ = writeln!(
                out,
                "| {} | Normal | {:.4} | {} |",
                r.seed,
                r.normal_train_accuracy,
                fmt_row(&r.normal_agreement)
            );
            for (rank, &m) in in_rule_order(&r.matching).iter().enumerate() {
                let _ = writeln!(
                    out,
                    "| {} | Diverse {} | {:.4} | {} |",
                    r.seed,
                    rank + 1,
                    r.diverse_train_accuracy[m],
                    fmt_row(&r.diverse_agreement[m])
                );
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub model: String,
    pub train_accuracy: f64,
    pub test_accuracy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Summary {
    pub seed: u64,
    pub rule_names: Vec<String>,
    pub rows: Vec<Table1Row>,
}

pub fn table1(cfg: &Resolved, dir: &Path) -> Result<Table1Summary> {
    let case = case_of(cfg.experiment())?;
    let seed = cfg.seed();
    let data = dataset_for(&case, cfg.n(), seed)?;
    data.save_csv(&dir.join("data.csv"))?;

    let logreg_cfg = EnsembleConfig {
        m: 1,
        lambda: 0.0,
        learning_rate: cfg.logreg_learning_rate(),
        epochs: cfg.logreg_epochs(),
        hidden_layers: Vec::new(),
        ..cfg.ensemble(seed, true)
    };
    log::info!("table1 logistic regression");
    let logreg = train_into(&data, &logreg_cfg, &dir.join("logistic_regression"))?;
    let tree_params = TreeParams {
        max_depth: cfg.tree_max_depth(),
        ..TreeParams::default()
    };
    log::info!("table1 decision tree");
    let tree = DecisionTree::fit(data.x(), data.dim(), data.y(), &tree_params)?;
    write_json(&dir.join("decision_tree.json"), &tree)?;
    let forest_cfg = ForestConfig {
        n_trees: cfg.forest_trees(),
        max_depth: cfg.tree_max_depth(),
        ..ForestConfig::default()
    };
    log::info!("table1 random forest");
    let forest = RandomForest::fit(
        data.x(),
        data.dim(),
        data.y(),
        &forest_cfg,
        derive_seed(seed, Stream::Forest, 0),
    )?;
    write_json(&dir.join("random_forest.json"), &forest)?;

    let eval_seed = derive_seed(seed, Stream::Eval, 1);
    let named: [(&str, &dyn Classifier); 3] = [
        ("Logistic Reg.", &logreg.models[0]),
        ("Decision Tree", &tree),
        ("Rand. Forest", &forest),
    ];
    let mut rows = Vec::new();
    for (name, model) in named {
        let test = agreement_matrix(&[model], &case.rules, &case.domain, cfg.n_eval(), eval_seed)?;
        rows.push(Table1Row {
            model: name.to_string(),
            train_accuracy: accuracy(model, data.x(), data.y()),
            test_accuracy: test.into_iter().next().unwrap_or_default(),
        });
    }
    Ok(Table1Summary {
        seed,
        rule_names: case.rules.iter().map(|r| r.name.clone()).collect(),
        rows,
    })
}

impl Table1Summary {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Model | Train |");
        for r in &self.rule_names {
            let _ = write!(out, " {r} |");
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---|".repeat(self.rule_names.len()));
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {:.4} | {} |",
                row.model,
                row.train_accuracy,
                fmt_row(&row.test_accuracy)
            );
        }
        out
    }
}
