//! `gen-data`, `train` and `eval`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lit_core::datasets::{gen_confounded, sidecar_path, Dataset, DomainBox, GroundTruthRule};
use lit_core::evaluation::{
    agreement_matrix, build_report, grid_logits, EvaluationReport, GridSpec, PerturbationSpec,
    ReportSpec,
};
use lit_core::models::{Classifier, MlpParams};
use lit_core::rng::{derive_seed, Stream};
use lit_core::training::{m_oversize_diagnostic, train_ensemble, OversizeDiagnostic, TrainedEnsemble, TrainingHistory};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Experiment, Resolved};
use crate::error::{CliError, Result};

/// Output root when neither `--output-root` nor this variable is given.
pub const OUTPUT_ENV: &str = "LIT_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_ROOT: &str = "lit-output";

pub fn output_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

/// `<root>/<command>-<experiment>-<hash>`, created if missing.
pub fn run_dir(root: &Path, command: &str, cfg: &Resolved, salt: &str) -> Result<PathBuf> {
    let dir = root.join(format!(
        "{command}-{}-{}",
        cfg.experiment().name(),
        cfg.hash(&format!("{command}\0{salt}"))
    ));
    create_dir(&dir)?;
    Ok(dir)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// The training set of an experiment: generated from its rules, or read from CSV.
pub fn make_dataset(cfg: &Resolved) -> Result<Dataset> {
    match cfg.experiment().case() {
        Some(case) => Ok(gen_confounded(
            &case.rules,
            &case.domain,
            cfg.n(),
            derive_seed(cfg.seed(), Stream::Data, 0),
        )?),
        None => {
            let path = cfg
                .csv_path()
                .ok_or_else(|| CliError::Usage("experiment csv needs csv_path".into()))?;
            Ok(Dataset::load_csv(path)?)
        }
    }
}

/// Rules and evaluation domain; CSV data has no rules and uses its own domain.
pub fn rules_and_domain(experiment: Experiment, data: &Dataset) -> (Vec<GroundTruthRule>, DomainBox) {
    match experiment.case() {
        Some(case) => (case.rules, case.domain),
        None => (Vec::new(), data.domain().clone()),
    }
}

fn save_dataset(data: &Dataset, dir: &Path) -> Result<()> {
    let path = dir.join("data.csv");
    data.save_csv(&path)?;
    data.save_provenance(&sidecar_path(&path))?;
    Ok(())
}

pub struct GenDataOutput {
    pub dir: PathBuf,
    pub dataset: Dataset,
}

pub fn gen_data(cfg: &Resolved, root: &Path) -> Result<GenDataOutput> {
    let data = make_dataset(cfg)?;
    let dir = run_dir(root, "gen-data", cfg, "")?;
    save_dataset(&data, &dir)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    match data.provenance().drawn.filter(|_| cfg.experiment() != Experiment::Csv) {
        Some(drawn) => println!(
            "kept {} of {drawn} draws ({} rejected)",
            data.len(),
            drawn - data.len() as u64
        ),
        None => println!("read {} rows", data.len()),
    }
    println!("{}", dir.display());
    Ok(GenDataOutput { dir, dataset: data })
}

/// History sidecar: the per-epoch record plus the oversize diagnostic.
#[derive(Serialize)]
pub struct HistorySidecar<'a> {
    pub history: &'a TrainingHistory,
    pub diagnostic: &'a OversizeDiagnostic,
    pub ensemble: &'a lit_core::training::EnsembleConfig,
}

pub fn save_models(models: &[MlpParams], dir: &Path) -> Result<()> {
    for (k, m) in models.iter().enumerate() {
        write_json(&dir.join(format!("model_{k}.json")), m)?;
    }
    Ok(())
}

/// Writes models, `history.csv` and `history.json` into `dir` and prints the diagnostic.
pub fn save_training(
    trained: &TrainedEnsemble,
    config: &lit_core::training::EnsembleConfig,
    dir: &Path,
) -> Result<OversizeDiagnostic> {
    create_dir(dir)?;
    save_models(&trained.models, dir)?;
    trained.history.save_csv(&dir.join("history.csv"))?;
    let diagnostic = m_oversize_diagnostic(&trained.history, config);
    write_json(
        &dir.join("history.json"),
        &HistorySidecar {
            history: &trained.history,
            diagnostic: &diagnostic,
            ensemble: config,
        },
    )?;
    println!("oversize diagnostic ({}): {}", dir.display(), diagnostic.message);
    Ok(diagnostic)
}

pub struct TrainOutput {
    pub dir: PathBuf,
    pub trained: TrainedEnsemble,
    pub diagnostic: OversizeDiagnostic,
}

pub fn train(cfg: &Resolved, root: &Path) -> Result<TrainOutput> {
    let data = make_dataset(cfg)?;
    let ensemble = cfg.ensemble(cfg.seed(), cfg.baseline());
    let dir = run_dir(root, "train", cfg, "")?;
    save_dataset(&data, &dir)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    let trained = train_ensemble(&data, &ensemble)?;
    for w in &trained.history.warnings {
        println!("warning: {w}");
    }
    let diagnostic = save_training(&trained, &ensemble, &dir)?;
    println!("{}", dir.display());
    Ok(TrainOutput {
        dir,
        trained,
        diagnostic,
    })
}

/// Reads `model_0.json`, `model_1.json`, … from `dir`.
pub fn load_models(dir: &Path) -> Result<Vec<MlpParams>> {
    let mut models = Vec::new();
    loop {
        let path = dir.join(format!("model_{}.json", models.len()));
        if !path.exists() {
            break;
        }
        let model: MlpParams = serde_json::from_str(&read_text(&path)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        models.push(model);
    }
    if models.is_empty() {
        return Err(CliError::Usage(format!("no model_0.json in {}", dir.display())));
    }
    Ok(models)
}

pub fn report_spec(cfg: &Resolved, domain: &DomainBox) -> ReportSpec {
    ReportSpec {
        n_eval: cfg.n_eval(),
        eps_stab: cfg.eps_stab(),
        perturbation: PerturbationSpec::for_domain(domain, 10_000),
        mi_points: cfg.mi_points(),
        cos2_points: None,
    }
}

/// Grids written for one model: the plane for 2D inputs, otherwise one
/// projection per rule's pair of dimensions (or the first two dimensions).
pub fn grid_specs(cfg: &Resolved, dim: usize, rules: &[GroundTruthRule]) -> Vec<GridSpec> {
    if dim == 2 {
        return vec![GridSpec::plane(cfg.grid_resolution())];
    }
    let mut pairs: Vec<(usize, usize)> = rules
        .iter()
        .filter_map(|r| match r.arity_dims()[..] {
            [i, j] => Some((i, j)),
            _ => None,
        })
        .collect();
    if pairs.is_empty() {
        pairs.push((0, 1));
    }
    pairs
        .into_iter()
        .map(|dims| GridSpec {
            dims,
            resolution: cfg.grid_resolution(),
            projection_samples: Some(cfg.projection_samples()),
        })
        .collect()
}

pub fn grid_file_name(prefix: &str, spec: &GridSpec, dim: usize) -> String {
    if dim == 2 {
        format!("{prefix}.csv")
    } else {
        format!("{prefix}_x{}_x{}.csv", spec.dims.0, spec.dims.1)
    }
}

pub fn write_grid(
    model: &MlpParams,
    domain: &DomainBox,
    spec: &GridSpec,
    seed: u64,
    path: &Path,
    label: &str,
) -> Result<()> {
    let grid = grid_logits(model, domain, spec, seed)?;
    grid.save_csv(path, label)?;
    Ok(())
}

pub struct EvalOutput {
    pub dir: PathBuf,
    pub report: EvaluationReport,
    pub baseline_agreement: Option<Vec<Vec<f64>>>,
}

fn content_hash(paths: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        h.update(std::fs::read(p).map_err(|e| CliError::io(p, e))?);
        h.update(b"\0");
    }
    Ok(hex::encode(h.finalize()))
}

fn model_files(dir: &Path, count: usize) -> Vec<PathBuf> {
    (0..count).map(|k| dir.join(format!("model_{k}.json"))).collect()
}

/// Evaluates the models in `models_dir` on `data_path` (default: the
/// training data saved next to the models).
pub fn eval(
    cfg: &Resolved,
    models_dir: &Path,
    baseline_dir: Option<&Path>,
    data_path: Option<&Path>,
    root: &Path,
) -> Result<EvalOutput> {
    let models = load_models(models_dir)?;
    let data_path = data_path.map_or_else(|| models_dir.join("data.csv"), Path::to_path_buf);
    let data = Dataset::load_csv(&data_path)?;
    let baseline = baseline_dir.map(load_models).transpose()?;

    let mut hashed = model_files(models_dir, models.len());
    hashed.push(data_path.clone());
    if let (Some(dir), Some(b)) = (baseline_dir, &baseline) {
        hashed.extend(model_files(dir, b.len()));
    }
    let dir = run_dir(root, "eval", cfg, &content_hash(&hashed)?)?;

    let (rules, domain) = rules_and_domain(cfg.experiment(), &data);
    let seed = derive_seed(cfg.seed(), Stream::Eval, 1);
    let report = build_report(&models, &rules, &data, &domain, &report_spec(cfg, &domain), seed)?;
    write_text(&dir.join("report.json"), &(report.to_json()? + "\n"))?;
    write_text(&dir.join("report.csv"), &report.to_csv())?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;

    let grid_seed = derive_seed(cfg.seed(), Stream::Eval, 2);
    for (k, m) in models.iter().enumerate() {
        for spec in grid_specs(cfg, data.dim(), &rules) {
            let name = grid_file_name(&format!("grid_model_{k}"), &spec, data.dim());
            write_grid(m, &domain, &spec, grid_seed, &dir.join(name), &format!("model {k}"))?;
        }
    }

    let baseline_agreement = match &baseline {
        Some(b) => {
            let refs: Vec<&dyn Classifier> = b.iter().map(|m| m as &dyn Classifier).collect();
            let agreement = agreement_matrix(&refs, &rules, &domain, cfg.n_eval(), seed)?;
            let normal_train: Vec<f64> = b
                .iter()
                .map(|m| lit_core::models::accuracy(m, data.x(), data.y()))
                .collect();
            write_text(
                &dir.join("comparison.md"),
                &comparison_table(&rules, &agreement, &normal_train, &report),
            )?;
            Some(agreement)
        }
        None => None,
    };
    print_report(&report);
    println!("{}", dir.display());
    Ok(EvalOutput {
        dir,
        report,
        baseline_agreement,
    })
}

fn print_report(report: &EvaluationReport) {
    for (m, row) in report.agreement.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        println!("model {m}: agreement [{}]", cells.join(", "));
    }
    if let Some(matched) = &report.matched_agreement {
        println!("matched agreement: {matched:?}");
    }
}

/// Normal model(s) and diverse models side by side, one column per rule.
pub fn comparison_table(
    rules: &[GroundTruthRule],
    normal_agreement: &[Vec<f64>],
    normal_train: &[f64],
    report: &EvaluationReport,
) -> String {
    let mut out = String::from("| Model | Train |");
    for r in rules {
        let _ = write!(out, " {} |", r.name);
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(rules.len()));
    out.push('\n');
    let mut row = |name: String, train: f64, agreement: &[f64]| {
        let _ = write!(out, "| {name} | {train:.4} |");
        for a in agreement {
            let _ = write!(out, " {a:.4} |");
        }
        out.push('\n');
    };
    for (k, (a, &t)) in normal_agreement.iter().zip(normal_train).enumerate() {
        let name = if normal_agreement.len() == 1 {
            "Normal".to_string()
        } else {
            format!("Normal {}", k + 1)
        };
        row(name, t, a);
    }
    let order: Vec<usize> = match &report.matching {
        // List diverse models in the order of the rules they match.
        Some(m) => {
            let mut idx: Vec<usize> = (0..m.assignment.len()).collect();
            idx.sort_by_key(|&i| m.assignment[i]);
            idx
        }
        None => (0..report.agreement.len()).collect(),
    };
    for (rank, &m) in order.iter().enumerate() {
        row(
            format!("Diverse {} (model {m})", rank + 1),
            report.train_accuracy[m],
            &report.agreement[m],
        );
    }
    out
}
