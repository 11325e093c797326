//! Rule recovery, gradient orthogonality and the correlation / mutual
//! information identity for Gaussian input perturbations.
//!
//! For `δ ~ N(0, σ²I)` the projections `δᵀ∇f_i` and `δᵀ∇f_j` are jointly
//! Gaussian with correlation `cos(∇f_i, ∇f_j)`, so their mutual information is
//! `−½ ln(1 − cos²)`. [`mi_formula`] evaluates that expression and
//! [`mi_empirical`] estimates it by sampling.

use std::fmt::Write as _;
use std::path::Path;

use itertools::Itertools;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::softplus;
use crate::datasets::{gen_rule_testset, Dataset, DomainBox, GroundTruthRule};
use crate::models::{accuracy, Classifier, LogOddsModel, MlpParams};
use crate::rng::{derive_seed, rng, Stream};
use crate::training::cos_squared;
use crate::{Error, Result};

/// Default number of uniform samples per single-rule test set.
pub const DEFAULT_EVAL_SAMPLES: usize = 10_000;
/// Default number of samples averaged over the hidden dimensions of a projected grid.
pub const DEFAULT_PROJECTION_SAMPLES: usize = 256;
/// `ρ̂²` at or above this is reported as divergent mutual information.
pub const DIVERGENCE_THRESHOLD: f64 = 1.0 - 1e-12;

/// Fraction of `n` uniform samples of `domain` on which `model` predicts the rule's label.
pub fn agreement<C: Classifier + ?Sized>(
    model: &C,
    rule: &GroundTruthRule,
    domain: &DomainBox,
    n: usize,
    seed: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Evaluation("agreement needs at least one sample".into()));
    }
    let test = gen_rule_testset(rule, domain, n, seed)?;
    Ok(accuracy(model, test.x(), test.y()))
}

/// Seed of the shared test set for rule `k`.
pub fn testset_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, Stream::TestSet, k as u64)
}

/// `M × K` agreements; every model is scored on the same test set per rule.
pub fn agreement_matrix(
    models: &[&dyn Classifier],
    rules: &[GroundTruthRule],
    domain: &DomainBox,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Evaluation("agreement needs at least one sample".into()));
    }
    if let Some(m) = models.iter().find(|m| m.input_dim() != domain.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "model of input dimension {} evaluated on a {}-dimensional domain",
            m.input_dim(),
            domain.dim()
        )));
    }
    let mut out = vec![Vec::with_capacity(rules.len()); models.len()];
    for (k, rule) in rules.iter().enumerate() {
        let test = gen_rule_testset(rule, domain, n, testset_seed(seed, k))?;
        for (row, model) in out.iter_mut().zip(models) {
            row.push(accuracy(*model, test.x(), test.y()));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `assignment[m]` is the rule index matched to model `m`.
    pub assignment: Vec<usize>,
    pub score: f64,
}

impl Matching {
    pub fn matched_agreements(&self, agreement: &[Vec<f64>]) -> Vec<f64> {
        self.assignment
            .iter()
            .enumerate()
            .map(|(m, &k)| agreement[m][k])
            .collect()
    }
}

/// Largest matrix side accepted by [`match_models`].
pub const MAX_MATCHING_SIZE: usize = 8;

/// Exhaustive search for the model-to-rule bijection with the highest summed
/// agreement. Among equal scores the lexicographically smallest assignment wins.
pub fn match_models(agreement: &[Vec<f64>]) -> Result<Matching> {
    let m = agreement.len();
    if m == 0 || agreement.iter().any(|row| row.len() != m) {
        return Err(Error::Evaluation(format!(
            "matching needs a square non-empty agreement matrix, got {m} rows of lengths {:?}",
            agreement.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    if m > MAX_MATCHING_SIZE {
        return Err(Error::Evaluation(format!(
            "matching supports at most {MAX_MATCHING_SIZE} models, got {m}"
        )));
    }
    let mut best: Option<Matching> = None;
    // permutations() enumerates in lexicographic order, so a strict comparison keeps the first.
    for perm in (0..m).permutations(m) {
        let score = perm
            .iter()
            .enumerate()
            .fold(0.0, |acc, (i, &k)| acc + agreement[i][k]);
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(Matching {
                assignment: perm,
                score,
            });
        }
    }
    Ok(best.expect("at least one permutation"))
}

/// Mean over the rows of `points` of pairwise `cos²` between log-odds input gradients.
pub fn cos2_stats(
    models: &[&dyn LogOddsModel],
    points: &[f64],
    dim: usize,
    eps_stab: f64,
) -> Result<Vec<Vec<f64>>> {
    if dim == 0 || points.is_empty() || points.len() % dim != 0 {
        return Err(Error::Evaluation(format!(
            "need at least one point of dimension {dim}, got {} values",
            points.len()
        )));
    }
    let m = models.len();
    let mut sums = vec![vec![0.0; m]; m];
    for x in points.chunks_exact(dim) {
        let grads: Vec<Vec<f64>> = models.iter().map(|f| f.logit_gradient(x)).collect();
        for a in 0..m {
            for b in a..m {
                sums[a][b] += cos_squared(&grads[a], &grads[b], eps_stab);
            }
        }
    }
    let n = (points.len() / dim) as f64;
    for a in 0..m {
        for b in a..m {
            sums[a][b] /= n;
            sums[b][a] = sums[a][b];
        }
    }
    Ok(sums)
}

/// Mean of the strictly upper-triangular entries; 0 for a single model.
pub fn mean_off_diagonal(matrix: &[Vec<f64>]) -> f64 {
    let m = matrix.len();
    if m < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for a in 0..m {
        for b in a + 1..m {
            total += matrix[a][b];
        }
    }
    total / (m * (m - 1) / 2) as f64
}

/// Mutual information in nats; `Divergent` stands for `+∞`. Serialized as a
/// number or `null`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Nats {
    Finite(f64),
    Divergent,
}

impl Nats {
    pub fn finite(self) -> Option<f64> {
        match self {
            Nats::Finite(v) => Some(v),
            Nats::Divergent => None,
        }
    }
}

impl std::fmt::Display for Nats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Nats::Finite(v) => write!(f, "{v}"),
            Nats::Divergent => f.write_str("divergent"),
        }
    }
}

/// `−½ ln(1 − cos²)`.
pub fn mi_formula(cos2: f64) -> Result<Nats> {
    if !(cos2 >= 0.0) {
        return Err(Error::Evaluation(format!("cos² must lie in [0, 1], got {cos2}")));
    }
    if cos2 >= 1.0 {
        return Ok(Nats::Divergent);
    }
    Ok(Nats::Finite(-0.5 * (-cos2).ln_1p()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub sigma: f64,
    pub n_samples: usize,
}

impl PerturbationSpec {
    /// `σ = 1e−4 ×` the widest side of `domain`.
    pub fn for_domain(domain: &DomainBox, n_samples: usize) -> Self {
        let width = (0..domain.dim()).map(|a| domain.width(a)).fold(0.0, f64::max);
        Self {
            sigma: 1e-4 * width,
            n_samples,
        }
    }
}

/// Samples `δ ~ N(0, σ²I)`, correlates `δᵀv` with `δᵀw` and returns `−½ ln(1 − ρ̂²)`.
pub fn mi_empirical(v: &[f64], w: &[f64], spec: &PerturbationSpec, seed: u64) -> Result<Nats> {
    if v.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "gradients of lengths {} and {}",
            v.len(),
            w.len()
        )));
    }
    if v.iter().all(|&a| a == 0.0) || w.iter().all(|&a| a == 0.0) {
        return Err(Error::Evaluation("mutual information of a zero gradient".into()));
    }
    if !(spec.sigma > 0.0) || spec.n_samples < 2 {
        return Err(Error::InvalidConfig(format!(
            "perturbation needs sigma > 0 and at least 2 samples, got {spec:?}"
        )));
    }
    let mut r = rng(seed);
    let mut delta = vec![0.0; v.len()];
    let (mut sp, mut sq, mut spp, mut sqq, mut spq) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..spec.n_samples {
        for d in delta.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut r);
            *d = spec.sigma * z;
        }
        let p: f64 = delta.iter().zip(v).map(|(a, b)| a * b).sum();
        let q: f64 = delta.iter().zip(w).map(|(a, b)| a * b).sum();
        sp += p;
        sq += q;
        spp += p * p;
        sqq += q * q;
        spq += p * q;
    }
    let n = spec.n_samples as f64;
    let cov = spq - sp * sq / n;
    let var_p = spp - sp * sp / n;
    let var_q = sqq - sq * sq / n;
    let rho2 = cov * cov / (var_p * var_q);
    if !rho2.is_finite() {
        return Err(Error::Evaluation("degenerate projection variance".into()));
    }
    if rho2 >= DIVERGENCE_THRESHOLD {
        return Ok(Nats::Divergent);
    }
    Ok(Nats::Finite(-0.5 * (-rho2).ln_1p()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// The two input dimensions spanning the lattice.
    pub dims: (usize, usize),
    /// Lattice points per axis.
    pub resolution: usize,
    /// Samples of the remaining dimensions averaged per lattice point; needed
    /// whenever the model has more than two inputs.
    pub projection_samples: Option<usize>,
}

impl GridSpec {
    pub fn plane(resolution: usize) -> Self {
        Self {
            dims: (0, 1),
            resolution,
            projection_samples: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: (usize, usize),
    pub axis0: Vec<f64>,
    pub axis1: Vec<f64>,
    /// Row-major: `values[i * axis1.len() + j]` is at `(axis0[i], axis1[j])`.
    pub values: Vec<f64>,
    /// Number of hidden-dimension samples averaged per point; 0 for a direct plane.
    pub projection_samples: usize,
}

fn lattice(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-odds of the mean probability `mean σ(l_i)`, evaluated without rounding
/// the probability.
pub fn logit_of_mean_probability(logits: &[f64]) -> f64 {
    let log_p: Vec<f64> = logits.iter().map(|&l| -softplus(-l)).collect();
    let log_q: Vec<f64> = logits.iter().map(|&l| -softplus(l)).collect();
    log_sum_exp(&log_p) - log_sum_exp(&log_q)
}

/// Logits on a `resolution × resolution` lattice over two dimensions of
/// `domain`. Models with more inputs report, per lattice point, the log-odds of
/// the mean probability over uniform samples of the other dimensions.
pub fn grid_logits(
    model: &dyn LogOddsModel,
    domain: &DomainBox,
    spec: &GridSpec,
    seed: u64,
) -> Result<Grid> {
    let dim = domain.dim();
    let (d0, d1) = spec.dims;
    if spec.resolution < 2 {
        return Err(Error::InvalidConfig(format!(
            "grid resolution must be at least 2, got {}",
            spec.resolution
        )));
    }
    if d0 == d1 || d0 >= dim || d1 >= dim {
        return Err(Error::InvalidConfig(format!(
            "grid dimensions {:?} invalid for a {dim}-dimensional domain",
            spec.dims
        )));
    }
    if model.input_dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "model of input dimension {} gridded over a {dim}-dimensional domain",
            model.input_dim()
        )));
    }
    let axis0 = lattice(domain.lower()[d0], domain.upper()[d0], spec.resolution);
    let axis1 = lattice(domain.lower()[d1], domain.upper()[d1], spec.resolution);
    let mut values = Vec::with_capacity(spec.resolution * spec.resolution);
    if dim == 2 {
        let mut x = vec![0.0; 2];
        for &a in &axis0 {
            for &b in &axis1 {
                x[d0] = a;
                x[d1] = b;
                values.push(model.logit(&x));
            }
        }
        return Ok(Grid {
            dims: spec.dims,
            axis0,
            axis1,
            values,
            projection_samples: 0,
        });
    }
    let samples = match spec.projection_samples {
        Some(s) if s > 0 => s,
        _ => {
            return Err(Error::InvalidConfig(
                "projection sample count required".into(),
            ))
        }
    };
    let mut r = rng(seed);
    let background: Vec<Vec<f64>> = (0..samples).map(|_| domain.sample(&mut r)).collect();
    let mut logits = vec![0.0; samples];
    let mut x = vec![0.0; dim];
    for &a in &axis0 {
        for &b in &axis1 {
            for (l, bg) in logits.iter_mut().zip(&background) {
                x.copy_from_slice(bg);
                x[d0] = a;
                x[d1] = b;
                *l = model.logit(&x);
            }
            values.push(logit_of_mean_probability(&logits));
        }
    }
    Ok(Grid {
        dims: spec.dims,
        axis0,
        axis1,
        values,
        projection_samples: samples,
    })
}

impl Grid {
    /// CSV with `#`-prefixed metadata lines, then `dim_i,dim_j,value` rows.
    pub fn to_csv(&self, label: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# model: {label}");
        let _ = writeln!(out, "# dim_i: x{}", self.dims.0);
        let _ = writeln!(out, "# dim_j: x{}", self.dims.1);
        let _ = writeln!(out, "# resolution: {}x{}", self.axis0.len(), self.axis1.len());
        if self.projection_samples > 0 {
            let _ = writeln!(
                out,
                "# value: log-odds of mean probability over {} samples of the other dimensions",
                self.projection_samples
            );
        } else {
            let _ = writeln!(out, "# value: log-odds");
        }
        out.push_str("dim_i,dim_j,value\n");
        let cols = self.axis1.len();
        for (i, &a) in self.axis0.iter().enumerate() {
            for (j, &b) in self.axis1.iter().enumerate() {
                let _ = writeln!(out, "{a:?},{b:?},{:?}", self.values[i * cols + j]);
            }
        }
        out
    }

    pub fn save_csv(&self, path: &Path, label: &str) -> Result<()> {
        std::fs::write(path, self.to_csv(label)).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiCheck {
    pub models: (usize, usize),
    pub point: Vec<f64>,
    pub cos2: f64,
    pub formula: Nats,
    pub empirical: Nats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSpec {
    /// Uniform samples per single-rule test set.
    pub n_eval: usize,
    pub eps_stab: f64,
    pub perturbation: PerturbationSpec,
    /// Points at which the mutual-information identity is checked per model pair.
    pub mi_points: usize,
    /// Cap on training rows used for the `cos²` matrix; `None` uses all.
    pub cos2_points: Option<usize>,
}

impl ReportSpec {
    pub fn for_domain(domain: &DomainBox) -> Self {
        Self {
            n_eval: DEFAULT_EVAL_SAMPLES,
            eps_stab: 1e-6,
            perturbation: PerturbationSpec::for_domain(domain, 10_000),
            mi_points: 4,
            cos2_points: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rule_names: Vec<String>,
    /// `agreement[m][k]`: accuracy of model `m` against rule `k` over uniform domain samples.
    pub agreement: Vec<Vec<f64>>,
    /// Present when there are as many models as rules.
    pub matching: Option<Matching>,
    pub matched_agreement: Option<Vec<f64>>,
    /// Mean pairwise `cos²` of log-odds input gradients over the training points.
    pub mean_cos2: Vec<Vec<f64>>,
    pub mi_check: Vec<MiCheck>,
    pub train_accuracy: Vec<f64>,
}

/// Evaluates trained models against the ground-truth rules and their training data.
pub fn build_report(
    models: &[MlpParams],
    rules: &[GroundTruthRule],
    dataset: &Dataset,
    domain: &DomainBox,
    spec: &ReportSpec,
    seed: u64,
) -> Result<EvaluationReport> {
    if models.is_empty() {
        return Err(Error::Evaluation("no models to evaluate".into()));
    }
    if let Some(m) = models.iter().find(|m| m.layer_sizes()[0] != dataset.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "model of input dimension {} evaluated on {}-dimensional data",
            m.layer_sizes()[0],
            dataset.dim()
        )));
    }
    let classifiers: Vec<&dyn Classifier> = models.iter().map(|m| m as &dyn Classifier).collect();
    let agreement = agreement_matrix(&classifiers, rules, domain, spec.n_eval, seed)?;
    let matching = if models.len() == rules.len() && !rules.is_empty() {
        Some(match_models(&agreement)?)
    } else {
        None
    };
    let matched_agreement = matching.as_ref().map(|m| m.matched_agreements(&agreement));

    let scorers: Vec<&dyn LogOddsModel> = models.iter().map(|m| m as &dyn LogOddsModel).collect();
    let dim = dataset.dim();
    let rows = spec.cos2_points.map_or(dataset.len(), |c| c.min(dataset.len()));
    let mean_cos2 = cos2_stats(&scorers, &dataset.x()[..rows * dim], dim, spec.eps_stab)?;

    let mut mi_check = Vec::new();
    if models.len() >= 2 && spec.mi_points > 0 {
        let mut r = rng(derive_seed(seed, Stream::Eval, 0));
        for p in 0..spec.mi_points {
            let point = domain.sample(&mut r);
            let grads: Vec<Vec<f64>> = models.iter().map(|m| m.input_gradient(&point)).collect();
            for (a, b) in (0..models.len()).tuple_combinations() {
                let cos2 = cos_squared(&grads[a], &grads[b], spec.eps_stab);
                let mi_seed = derive_seed(seed, Stream::Perturbation, (p * 64 + a * 8 + b) as u64);
                let empirical = match mi_empirical(&grads[a], &grads[b], &spec.perturbation, mi_seed) {
                    Ok(v) => v,
                    Err(Error::Evaluation(msg)) => {
                        log::warn!("skipping mutual-information check at point {p}: {msg}");
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                mi_check.push(MiCheck {
                    models: (a, b),
                    point: point.clone(),
                    cos2,
                    formula: mi_formula(cos2)?,
                    empirical,
                });
            }
        }
    }

    let train_accuracy = models
        .iter()
        .map(|m| accuracy(m, dataset.x(), dataset.y()))
        .collect();
    Ok(EvaluationReport {
        rule_names: rules.iter().map(|r| r.name.clone()).collect(),
        agreement,
        matching,
        matched_agreement,
        mean_cos2,
        mi_check,
        train_accuracy,
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Flat `section,row,column,value` table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,row,column,value\n");
        for (m, row) in self.agreement.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                let _ = writeln!(out, "agreement,model_{m},{},{v:?}", self.rule_names[k]);
            }
        }
        if let (Some(matching), Some(matched)) = (&self.matching, &self.matched_agreement) {
            for (m, (&k, v)) in matching.assignment.iter().zip(matched).enumerate() {
                let _ = writeln!(out, "matched_agreement,model_{m},{},{v:?}", self.rule_names[k]);
            }
        }
        for (a, row) in self.mean_cos2.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                let _ = writeln!(out, "mean_cos2,model_{a},model_{b},{v:?}");
            }
        }
        for (m, v) in self.train_accuracy.iter().enumerate() {
            let _ = writeln!(out, "train_accuracy,model_{m},,{v:?}");
        }
        out
    }
}
