//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! The heavy criteria train full-width networks with the shipped `reproduce`
//! configs, so a complete run takes on the order of an hour or two on one core.
//! Set `LIT_ACCEPTANCE_ONLY=1,2,9` to run a subset. Artifacts are kept under
//! `target/tmp/acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use lit_cli::reproduce::{Fig3Summary, Fig5Summary, Table1Summary};
use lit_core::autodiff::{central_differences, max_relative_error, Bindings, Shape, Tape};
use lit_core::datasets::{
    agreed_label, builtin_2d_cases, builtin_8d_case, gen_confounded, DomainBox,
};
use lit_core::evaluation::{mi_empirical, mi_formula, PerturbationSpec};
use lit_core::models::{input_gradient_expression, Activation, MlpParams};
use lit_core::rng::rng;
use lit_core::training::{
    cos_squared, lit_objective, m_oversize_diagnostic, EnsembleConfig, EpochRecord, ObjectiveTape,
    TrainingHistory,
};
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn work_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn fresh(dir: &Path) -> PathBuf {
    if dir.exists() {
        fs::remove_dir_all(dir).unwrap();
    }
    fs::create_dir_all(dir).unwrap();
    dir.to_path_buf()
}

/// Runs the binary and returns the run directory it reports, plus its stdout.
fn lit(args: &[&str], root: &Path) -> Result<(PathBuf, String), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lit"))
        .args(args)
        .arg("--output-root")
        .arg(root)
        .output()
        .map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    if !out.status.success() {
        return Err(format!(
            "lit {} exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    let dir = stdout.lines().last().unwrap_or_default().trim().into();
    Ok((dir, stdout))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn fmt(values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(|v| format!("{v:.3}")).collect();
    format!("[{}]", cells.join(", "))
}

fn tape_input_gradient(model: &MlpParams, x: &[f64]) -> Vec<f64> {
    let mut tape = Tape::new();
    let leaves = model.register(&mut tape);
    let xin = tape.input(Shape::Vector(x.len()));
    let g = input_gradient_expression(&mut tape, &leaves, xin).unwrap();
    let mut b = Bindings::new();
    leaves.bind(model, &mut b);
    b.bind(xin, x);
    tape.forward(&b).unwrap().value(g).to_vec()
}

fn gradient_correctness() -> Outcome {
    let mut r = rng(2024);
    let mut worst_input: f64 = 0.0;
    let mut worst_theta: f64 = 0.0;
    for config in 0..20u64 {
        let dim = r.random_range(2..=5usize);
        let depth = r.random_range(1..=2usize);
        let mut sizes = vec![dim];
        sizes.extend((0..depth).map(|_| r.random_range(2..=16usize)));
        sizes.push(1);

        let model = MlpParams::init(&sizes, Activation::Softplus, 100 + config).unwrap();
        let x: Vec<f64> = (0..dim).map(|_| r.random_range(-3.0..3.0)).collect();
        let numeric = central_differences(|p| model.logit(p), &x, 1e-5);
        worst_input = worst_input.max(max_relative_error(&tape_input_gradient(&model, &x), &numeric));

        let models: Vec<MlpParams> = (0..2)
            .map(|k| MlpParams::init(&sizes, Activation::Softplus, 1000 + 2 * config + k).unwrap())
            .collect();
        let batch = 4;
        let xb: Vec<f64> = (0..batch * dim).map(|_| r.random_range(-3.0..3.0)).collect();
        let yb: Vec<u8> = (0..batch).map(|_| r.random_range(0..2u8)).collect();
        let tape = ObjectiveTape::build(&models, batch, 0.1, 1e-6).unwrap();
        let analytic = tape.evaluate(&models, &xb, &yb).unwrap();
        for (k, g) in analytic.gradients.iter().enumerate() {
            let numeric = central_differences(
                |p| {
                    let mut trial = models.clone();
                    trial[k].set_flat(p);
                    lit_objective(&trial, &xb, &yb, 0.1, 1e-6).total
                },
                &models[k].to_flat(),
                1e-4,
            );
            worst_theta = worst_theta.max(max_relative_error(&g.to_flat(), &numeric));
        }
    }
    Outcome::new(
        worst_input < 1e-4 && worst_theta < 1e-3,
        format!("20 configs: worst input-gradient error {worst_input:.2e}, worst objective error {worst_theta:.2e}"),
    )
}

fn mutual_information_identity() -> Outcome {
    let mut r = rng(77);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    while pairs < 50 {
        let dim = r.random_range(2..=8usize);
        let v: Vec<f64> = (0..dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let w: Vec<f64> = (0..dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let cos2 = cos_squared(&v, &w, 1e-6);
        if cos2 > 0.9 {
            continue;
        }
        let domain = DomainBox::cube(dim, -10.0, 10.0).unwrap();
        let spec = PerturbationSpec::for_domain(&domain, 100_000);
        let (Some(formula), Ok(empirical)) = (
            mi_formula(cos2).ok().and_then(|n| n.finite()),
            mi_empirical(&v, &w, &spec, 500 + pairs),
        ) else {
            return Outcome::new(false, format!("pair {pairs}: estimate failed"));
        };
        let Some(empirical) = empirical.finite() else {
            return Outcome::new(false, format!("pair {pairs}: empirical estimate diverged"));
        };
        worst = worst.max((empirical - formula).abs());
        pairs += 1;
    }
    Outcome::new(worst <= 0.02, format!("50 pairs, worst |empirical - formula| = {worst:.4} nats"))
}

struct Fig3Runs {
    summary: Fig3Summary,
    dir: PathBuf,
    stdout: String,
}

fn run_fig3(root: &Path) -> Result<Fig3Runs, String> {
    let (dir, stdout) = lit(&["reproduce", "fig3"], root)?;
    Ok(Fig3Runs {
        summary: read_json(&dir.join("summary.json"))?,
        dir,
        stdout,
    })
}

fn recovery_2d(fig3: &Fig3Runs) -> Outcome {
    let mut by_case: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let mut pass = true;
    for case in ["case1", "case2", "case3"] {
        let threshold = if case == "case3" { 0.85 } else { 0.9 };
        let runs: Vec<_> = fig3.summary.runs.iter().filter(|r| r.case == case).collect();
        let good = runs
            .iter()
            .filter(|r| {
                let worst_matched = r.matched_agreement.iter().copied().fold(f64::INFINITY, f64::min);
                let worst_normal = r.normal_agreement.iter().copied().fold(f64::INFINITY, f64::min);
                worst_matched >= threshold && worst_normal < worst_matched
            })
            .count();
        pass &= runs.len() == 5 && good >= 4;
        let per_seed: Vec<String> = runs
            .iter()
            .map(|r| format!("s{} {} vs normal {}", r.seed, fmt(&r.matched_agreement), fmt(&r.normal_agreement)))
            .collect();
        by_case
            .entry(case)
            .or_default()
            .push(format!("{good}/5 seeds at >= {threshold} ({})", per_seed.join("; ")));
    }
    let detail: Vec<String> = by_case.iter().map(|(c, v)| format!("{c}: {}", v.join(""))).collect();
    Outcome::new(pass, detail.join(" | "))
}

fn orthogonality(fig3: &Fig3Runs) -> Outcome {
    let runs = &fig3.summary.runs;
    let worst_diverse = runs.iter().map(|r| r.diverse_cos2).fold(0.0, f64::max);
    let lowest_control = runs.iter().map(|r| r.control_cos2).fold(f64::INFINITY, f64::min);
    Outcome::new(
        !runs.is_empty() && worst_diverse < 0.05 && lowest_control > 0.2,
        format!(
            "{} runs: max diverse cos2 {worst_diverse:.4} (< 0.05), min lambda=0 cos2 {lowest_control:.4} (> 0.2)",
            runs.len()
        ),
    )
}

fn dense_baselines(root: &Path) -> Result<Outcome, String> {
    let (dir, _) = lit(&["reproduce", "table1"], root)?;
    let summary: Table1Summary = read_json(&dir.join("summary.json"))?;
    let mut pass = summary.rows.len() == 3;
    let mut parts = Vec::new();
    for row in &summary.rows {
        let best = row.test_accuracy.iter().copied().fold(0.0, f64::max);
        let ok = row.train_accuracy >= 0.99 && best <= 0.85;
        pass &= ok;
        parts.push(format!(
            "{} train {:.4} tests {}{}",
            row.model,
            row.train_accuracy,
            fmt(&row.test_accuracy),
            if ok { "" } else { " (out of bounds)" }
        ));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn recovery_8d(root: &Path) -> Result<Outcome, String> {
    let (dir, _) = lit(&["reproduce", "fig5"], root)?;
    let summary: Fig5Summary = read_json(&dir.join("summary.json"))?;
    let mut good = 0;
    let mut parts = Vec::new();
    for run in &summary.runs {
        let by_rule = run.agreement_by_rule();
        let beats_normal = by_rule.iter().zip(&run.normal_agreement).all(|(d, n)| d > n);
        if run.mean_matched_agreement >= 0.85 && beats_normal {
            good += 1;
        }
        parts.push(format!(
            "s{} mean {:.3} by rule {} vs normal {}",
            run.seed,
            run.mean_matched_agreement,
            fmt(&by_rule),
            fmt(&run.normal_agreement)
        ));
    }
    Ok(Outcome::new(
        summary.runs.len() == 5 && good >= 3,
        format!("{good}/5 seeds ({})", parts.join("; ")),
    ))
}

fn hand_history(accuracies: &[f64]) -> TrainingHistory {
    TrainingHistory {
        epochs: vec![EpochRecord {
            epoch: 0,
            cross_entropy: vec![0.1; accuracies.len()],
            train_accuracy: accuracies.to_vec(),
            mean_cos2: 0.0,
            objective: 0.2,
        }],
        final_train_accuracy: accuracies.to_vec(),
        initial_cross_entropy: 1.4,
        initial_penalty: 0.02,
        initial_penalty_ratio: 0.02 / 1.4,
        warnings: Vec::new(),
    }
}

fn oversize_diagnostic(fig3: Option<&Fig3Runs>, root: &Path) -> Result<Outcome, String> {
    let config = EnsembleConfig {
        accuracy_epsilon: 0.05,
        ..EnsembleConfig::default()
    };
    let flagged = m_oversize_diagnostic(&hand_history(&[1.0, 0.6]), &config);
    let clean = m_oversize_diagnostic(&hand_history(&[1.0, 1.0]), &config);
    let hand_ok = flagged.flagged && flagged.low_accuracy_models == [1] && !clean.flagged;

    let mut emitted_ok = true;
    let mut emitted = String::from("fig3 not run");
    if let Some(f) = fig3 {
        let mut missing = 0;
        for run in &f.summary.runs {
            for part in ["normal", "diverse", "control"] {
                let path = f.dir.join(&run.case).join(format!("seed-{}", run.seed)).join(part).join("history.json");
                let sidecar: serde_json::Value = read_json(&path)?;
                if !sidecar["diagnostic"]["message"].is_string() {
                    missing += 1;
                }
            }
        }
        let printed = f.stdout.matches("oversize diagnostic").count();
        let expected = 3 * f.summary.runs.len();
        emitted_ok = missing == 0 && printed == expected;
        emitted = format!("{printed}/{expected} fig3 trainings printed it, {missing} sidecars missing it");
    }

    let (dir, stdout) = lit(&["train", "--experiment", "case1", "--M", "3", "--seed", "1"], root)?;
    let sidecar: serde_json::Value = read_json(&dir.join("history.json"))?;
    let m3_ok = stdout.contains("oversize diagnostic") && sidecar["diagnostic"]["flagged"].is_boolean();
    Ok(Outcome::new(
        hand_ok && emitted_ok && m3_ok,
        format!(
            "hand-built history flagged models {:?}; {emitted}; case1 M=3 run: flagged={} accuracies {} (recorded, not asserted)",
            flagged.low_accuracy_models,
            sidecar["diagnostic"]["flagged"],
            sidecar["diagnostic"]["final_train_accuracy"]
        ),
    ))
}

/// Relative path to contents for every file under `dir`.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(dir).unwrap().to_path_buf();
            (rel, fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism(first: &Fig3Runs, root: &Path) -> Result<Outcome, String> {
    let second = run_fig3(root)?;
    let a = tree(&first.dir);
    let b = tree(&second.dir);
    let same_name = first.dir.file_name() == second.dir.file_name();
    let differing: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    Ok(Outcome::new(
        same_name && differing.is_empty() && !a.is_empty(),
        format!(
            "{} files compared, {} differ{}",
            a.len(),
            differing.len(),
            differing.first().map(|d| format!(" (first: {d})")).unwrap_or_default()
        ),
    ))
}

fn dataset_properties() -> Outcome {
    let mut cases = builtin_2d_cases().to_vec();
    cases.push(builtin_8d_case());
    let mut checked = 0;
    for case in &cases {
        for seed in 1..=3 {
            let data = gen_confounded(&case.rules, &case.domain, 2000, seed).unwrap();
            for (x, &y) in data.rows().zip(data.y()) {
                let all_agree = case.rules.iter().all(|r| r.value(x) > 0.0)
                    || case.rules.iter().all(|r| r.value(x) < 0.0);
                let consistent = case.rules.iter().all(|r| r.label(x) == y);
                if !all_agree || !consistent || !case.domain.contains(x) {
                    return Outcome::new(false, format!("{} seed {seed}: bad row {x:?} label {y}", case.name));
                }
                checked += 1;
            }
        }
    }
    let f1 = &builtin_2d_cases()[0];
    let mut r = rng(9);
    let probes = 100_000;
    let kept = (0..probes)
        .filter(|_| agreed_label(&f1.rules, &f1.domain.sample(&mut r)).is_some())
        .count();
    let fraction = kept as f64 / probes as f64;
    Outcome::new(
        (fraction - 0.5).abs() <= 0.01,
        format!("{checked} generated rows checked; case1 kept fraction {fraction:.4} over {probes} probes"),
    )
}

fn main() {
    let only: Option<Vec<u8>> = std::env::var("LIT_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |id: u8| only.as_ref().is_none_or(|o| o.contains(&id));
    let root = work_dir();
    fs::create_dir_all(&root).unwrap();

    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let mut record = |id: u8, name: &'static str, outcome: Result<Outcome, String>| {
        let outcome = outcome.unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        println!(
            "criterion {id} [{}] {name}: {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
        results.push((id, name, outcome));
    };

    if wanted(1) {
        record(1, "gradient correctness", Ok(gradient_correctness()));
    }
    if wanted(2) {
        record(2, "mutual information identity", Ok(mutual_information_identity()));
    }
    if wanted(9) {
        record(9, "dataset construction", Ok(dataset_properties()));
    }
    if wanted(5) {
        record(5, "8D dense-combination baselines", dense_baselines(&fresh(&root.join("table1"))));
    }

    let needs_fig3 = [3, 4, 7, 8].into_iter().any(wanted);
    let fig3 = if needs_fig3 { Some(run_fig3(&fresh(&root.join("fig3-a")))) } else { None };
    let fig3_ok = fig3.as_ref().and_then(|f| f.as_ref().ok());
    let fig3_err = |f: &Option<Result<Fig3Runs, String>>| match f {
        Some(Err(e)) => e.clone(),
        _ => "fig3 not run".into(),
    };
    if wanted(3) {
        record(3, "2D recovery", fig3_ok.map(recovery_2d).ok_or_else(|| fig3_err(&fig3)));
    }
    if wanted(4) {
        record(4, "orthogonality achieved", fig3_ok.map(orthogonality).ok_or_else(|| fig3_err(&fig3)));
    }
    if wanted(8) {
        let outcome = match fig3_ok {
            Some(f) => determinism(f, &fresh(&root.join("fig3-b"))),
            None => Err(fig3_err(&fig3)),
        };
        record(8, "determinism", outcome);
    }
    if wanted(7) {
        record(7, "M-oversize diagnostic", oversize_diagnostic(fig3_ok, &fresh(&root.join("oversize"))));
    }
    if wanted(6) {
        record(6, "8D recovery", recovery_8d(&fresh(&root.join("fig5"))));
    }

    let failed: Vec<u8> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
