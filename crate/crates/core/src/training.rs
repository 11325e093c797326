//! Local independence training.
//!
//! The per-batch objective is
//!
//! ```text
//! Σ_m mean_x CE(logit_m(x), y)  +  λ · mean_x Σ_{a<b} cos²(∇ₓ logit_a(x), ∇ₓ logit_b(x))
//! ```
//!
//! with `cos²(v, w) = (v·w)² / ((v·v)(w·w) + ε)`. Both expectations run over the
//! same mini-batch. With `M = 1` (or `λ = 0`) this is ordinary independent
//! cross-entropy training.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softplus, Bindings, NodeId, Shape, Tape};
use crate::datasets::Dataset;
use crate::models::{Activation, MlpGradient, MlpLeaves, MlpParams};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Ensemble size `M`.
    pub m: usize,
    /// Penalty strength `λ`.
    pub lambda: f64,
    /// Stabilizer added to the cosine denominator.
    pub eps_stab: f64,
    /// A model counts as accurate when its training accuracy exceeds `1 − accuracy_epsilon`.
    pub accuracy_epsilon: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Hidden layer widths; input width comes from the data, output width is 1.
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            m: 2,
            lambda: 0.1,
            eps_stab: 1e-6,
            accuracy_epsilon: 0.05,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 128,
            epochs: 100,
            seed: 0,
            hidden_layers: vec![256, 256],
            activation: Activation::Softplus,
        }
    }
}

impl EnsembleConfig {
    pub fn layer_sizes(&self, input_dim: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(self.hidden_layers.iter().copied())
            .chain(std::iter::once(1))
            .collect()
    }

    /// Rejects invalid settings; returns warnings for legal but suspicious ones.
    pub fn validate(&self, input_dim: usize) -> Result<Vec<String>> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m == 0 {
            return bad("ensemble size must be positive".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.eps_stab > 0.0) {
            return bad(format!("eps_stab must be > 0, got {}", self.eps_stab));
        }
        if !(self.accuracy_epsilon > 0.0 && self.accuracy_epsilon < 1.0) {
            return bad(format!(
                "accuracy_epsilon must lie in (0, 1), got {}",
                self.accuracy_epsilon
            ));
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive".into());
        }
        let mut warnings = Vec::new();
        if self.m > input_dim {
            warnings.push(format!(
                "M = {} exceeds the input dimension D = {input_dim}; at most D models can have \
                 mutually orthogonal input gradients",
                self.m
            ));
        }
        Ok(warnings)
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// `−y log f − (1 − y) log(1 − f)` with `f = logistic(logit)`, evaluated as a
/// softplus of the signed logit.
pub fn cross_entropy(logit: f64, y: u8) -> f64 {
    if y == 1 {
        softplus(-logit)
    } else {
        softplus(logit)
    }
}

/// `(v·w)² / ((v·v)(w·w) + eps_stab)`.
pub fn cos_squared(v: &[f64], w: &[f64], eps_stab: f64) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let vw = dot(v, w);
    vw * vw / (dot(v, v) * dot(w, w) + eps_stab)
}

fn pairwise_cos_squared(grads: &[Vec<f64>], eps_stab: f64) -> f64 {
    let mut total = 0.0;
    for a in 0..grads.len() {
        for b in a + 1..grads.len() {
            total += cos_squared(&grads[a], &grads[b], eps_stab);
        }
    }
    total
}

/// Sum over unordered model pairs of the squared cosine between log-odds input gradients at `x`.
pub fn diversity_penalty(models: &[MlpParams], x: &[f64], eps_stab: f64) -> f64 {
    let grads: Vec<Vec<f64>> = models.iter().map(|m| m.input_gradient(x)).collect();
    pairwise_cos_squared(&grads, eps_stab)
}

fn pairs(m: usize) -> usize {
    m * (m - 1) / 2
}

/// Breakdown of the objective on a set of rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveValue {
    /// Mean cross-entropy of each model.
    pub cross_entropy: Vec<f64>,
    /// Mean over rows of the summed pairwise `cos²` (without `λ`).
    pub penalty: f64,
    pub total: f64,
}

/// Direct evaluation of the objective on rows of `x` without a tape.
pub fn lit_objective(
    models: &[MlpParams],
    x: &[f64],
    y: &[u8],
    lambda: f64,
    eps_stab: f64,
) -> ObjectiveValue {
    let dim = models[0].layer_sizes()[0];
    let scale = 1.0 / y.len() as f64;
    let cross_entropy: Vec<f64> = models
        .iter()
        .map(|m| {
            let sum = x
                .chunks_exact(dim)
                .zip(y)
                .map(|(row, &label)| cross_entropy(m.logit(row), label))
                .fold(0.0, |acc, v| acc + v);
            sum * scale
        })
        .collect();
    let total_ce = cross_entropy.iter().fold(0.0, |acc, v| acc + v);
    if models.len() < 2 {
        return ObjectiveValue {
            cross_entropy,
            penalty: 0.0,
            total: total_ce,
        };
    }
    let penalty = x
        .chunks_exact(dim)
        .map(|row| diversity_penalty(models, row, eps_stab))
        .fold(0.0, |acc, v| acc + v)
        * scale;
    let total = if lambda == 0.0 {
        total_ce
    } else {
        total_ce + lambda * penalty
    };
    ObjectiveValue {
        cross_entropy,
        penalty,
        total,
    }
}

/// The objective for a fixed batch size recorded on a reusable tape.
pub struct ObjectiveTape {
    tape: Tape,
    models: Vec<MlpLeaves>,
    inputs: Vec<NodeId>,
    /// Per example: `+1` for label 0, `−1` for label 1.
    signs: Vec<NodeId>,
    logits: Vec<Vec<NodeId>>,
    ce_means: Vec<NodeId>,
    penalty_mean: Option<NodeId>,
    objective: NodeId,
    batch: usize,
}

/// Values and parameter gradients from one evaluation of an [`ObjectiveTape`].
#[derive(Clone, Debug)]
pub struct ObjectiveEvaluation {
    pub value: ObjectiveValue,
    pub gradients: Vec<MlpGradient>,
    /// `logits[m][i]` for model `m` on example `i`.
    pub logits: Vec<Vec<f64>>,
}

impl ObjectiveTape {
    pub fn build(
        models: &[MlpParams],
        batch: usize,
        lambda: f64,
        eps_stab: f64,
    ) -> Result<Self> {
        if models.is_empty() || batch == 0 {
            return Err(Error::InvalidConfig("need at least one model and one example".into()));
        }
        let dim = models[0].layer_sizes()[0];
        if models.iter().any(|m| m.layer_sizes()[0] != dim) {
            return Err(Error::DimensionMismatch("models disagree on input dimension".into()));
        }
        let mut tape = Tape::new();
        let leaves: Vec<MlpLeaves> = models.iter().map(|m| m.register(&mut tape)).collect();
        let mut inputs = Vec::with_capacity(batch);
        let mut signs = Vec::with_capacity(batch);
        let mut logits = vec![Vec::with_capacity(batch); models.len()];
        let mut ce_terms = vec![Vec::with_capacity(batch); models.len()];
        let mut penalty_terms = Vec::with_capacity(batch);
        let eps = tape.scalar(eps_stab);
        for _ in 0..batch {
            let x = tape.input(Shape::Vector(dim));
            let sign = tape.input(Shape::Scalar);
            let mut grads = Vec::with_capacity(models.len());
            for (m, l) in leaves.iter().enumerate() {
                let e = l.expressions(&mut tape, x)?;
                let signed = tape.mul(sign, e.logit)?;
                ce_terms[m].push(tape.softplus(signed)?);
                logits[m].push(e.logit);
                grads.push(e.input_gradient);
            }
            if models.len() >= 2 {
                let mut cos2 = Vec::with_capacity(pairs(models.len()));
                for a in 0..grads.len() {
                    for b in a + 1..grads.len() {
                        let vw = tape.dot(grads[a], grads[b])?;
                        let num = tape.square(vw)?;
                        let vv = tape.dot(grads[a], grads[a])?;
                        let ww = tape.dot(grads[b], grads[b])?;
                        let prod = tape.mul(vv, ww)?;
                        let den = tape.add(prod, eps)?;
                        let inv = tape.reciprocal(den)?;
                        cos2.push(tape.mul(num, inv)?);
                    }
                }
                penalty_terms.push(tape.add_all(&cos2)?);
            }
            inputs.push(x);
            signs.push(sign);
        }
        let scale = tape.scalar(1.0 / batch as f64);
        let ce_means = ce_terms
            .iter()
            .map(|terms| {
                let s = tape.add_all(terms)?;
                tape.mul(s, scale)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let total_ce = tape.add_all(&ce_means)?;
        let penalty_mean = if penalty_terms.is_empty() {
            None
        } else {
            let s = tape.add_all(&penalty_terms)?;
            Some(tape.mul(s, scale)?)
        };
        let objective = match penalty_mean {
            Some(p) if lambda != 0.0 => {
                let lam = tape.scalar(lambda);
                let weighted = tape.mul(lam, p)?;
                tape.add(total_ce, weighted)?
            }
            _ => total_ce,
        };
        Ok(Self {
            tape,
            models: leaves,
            inputs,
            signs,
            logits,
            ce_means,
            penalty_mean,
            objective,
            batch,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    /// Evaluates on `batch_size` rows (`x` row-major) and back-propagates.
    pub fn evaluate(&self, models: &[MlpParams], x: &[f64], y: &[u8]) -> Result<ObjectiveEvaluation> {
        if y.len() != self.batch || models.len() != self.models.len() {
            return Err(Error::DimensionMismatch(format!(
                "tape built for {} models x {} rows, given {} x {}",
                self.models.len(),
                self.batch,
                models.len(),
                y.len()
            )));
        }
        let dim = x.len() / y.len();
        const SIGNS: [f64; 2] = [1.0, -1.0];
        let mut bindings = Bindings::new();
        for (leaves, params) in self.models.iter().zip(models) {
            leaves.bind(params, &mut bindings);
        }
        for (i, (&input, &sign)) in self.inputs.iter().zip(&self.signs).enumerate() {
            bindings.bind(input, &x[i * dim..(i + 1) * dim]);
            let s = usize::from(y[i] == 1);
            bindings.bind(sign, &SIGNS[s..s + 1]);
        }
        let eval = self.tape.forward(&bindings)?;
        let grads = eval.backward(self.objective)?;
        Ok(ObjectiveEvaluation {
            value: ObjectiveValue {
                cross_entropy: self.ce_means.iter().map(|&c| eval.scalar(c)).collect(),
                penalty: self.penalty_mean.map_or(0.0, |p| eval.scalar(p)),
                total: eval.scalar(self.objective),
            },
            gradients: self.models.iter().map(|l| l.gradient(&grads)).collect(),
            logits: self
                .logits
                .iter()
                .map(|ls| ls.iter().map(|&l| eval.scalar(l)).collect())
                .collect(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of the parameter slices, taken in order.
    pub fn update<'a>(
        &mut self,
        params: impl Iterator<Item = &'a mut [f64]>,
        grads: impl Iterator<Item = &'a [f64]>,
        cfg: &AdamConfig,
    ) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let mut k = 0;
        for (p, g) in params.zip(grads) {
            assert_eq!(p.len(), g.len(), "parameter/gradient length mismatch");
            for (pi, &gi) in p.iter_mut().zip(g) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *pi -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
                k += 1;
            }
        }
        assert_eq!(k, self.m.len(), "Adam state sized for a different model");
    }
}

/// Adam step on a flat parameter vector.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) {
    state.update(std::iter::once(params), std::iter::once(grads), cfg);
}

/// Per-epoch statistics, averaged over the epoch's mini-batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub cross_entropy: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    /// Mean over examples and model pairs of `cos²`; 0 when `M = 1`.
    pub mean_cos2: f64,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Accuracy of the final parameters on the full training set.
    pub final_train_accuracy: Vec<f64>,
    /// Summed cross-entropy of the initial models over the training set.
    pub initial_cross_entropy: f64,
    /// `λ` times the initial mean penalty over the training set.
    pub initial_penalty: f64,
    /// `initial_penalty / initial_cross_entropy`; `λ` is best chosen so this is of order 1.
    pub initial_penalty_ratio: f64,
    pub warnings: Vec<String>,
}

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let m = self.final_train_accuracy.len();
        let mut out = String::from("epoch");
        for k in 0..m {
            let _ = write!(out, ",ce_{k}");
        }
        for k in 0..m {
            let _ = write!(out, ",acc_{k}");
        }
        out.push_str(",mean_cos2,objective\n");
        for r in &self.epochs {
            let _ = write!(out, "{}", r.epoch);
            for v in r.cross_entropy.iter().chain(&r.train_accuracy) {
                let _ = write!(out, ",{v:?}");
            }
            let _ = writeln!(out, ",{:?},{:?}", r.mean_cos2, r.objective);
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OversizeDiagnostic {
    pub flagged: bool,
    /// Required training accuracy, `1 − accuracy_epsilon`.
    pub threshold: f64,
    pub final_train_accuracy: Vec<f64>,
    pub low_accuracy_models: Vec<usize>,
    pub message: String,
}

/// Flags runs where some model ends below `1 − accuracy_epsilon` training
/// accuracy, the symptom of asking for more models than the data supports.
pub fn m_oversize_diagnostic(history: &TrainingHistory, config: &EnsembleConfig) -> OversizeDiagnostic {
    let threshold = 1.0 - config.accuracy_epsilon;
    let low: Vec<usize> = history
        .final_train_accuracy
        .iter()
        .enumerate()
        .filter(|(_, &a)| a < threshold)
        .map(|(k, _)| k)
        .collect();
    let message = if low.is_empty() {
        format!(
            "all {} models reach training accuracy >= {threshold}",
            history.final_train_accuracy.len()
        )
    } else {
        format!(
            "models {low:?} stay below training accuracy {threshold}; M = {} may exceed the \
             number of distinct rules the data supports",
            history.final_train_accuracy.len()
        )
    };
    OversizeDiagnostic {
        flagged: !low.is_empty(),
        threshold,
        final_train_accuracy: history.final_train_accuracy.clone(),
        low_accuracy_models: low,
        message,
    }
}

#[derive(Clone, Debug)]
pub struct TrainedEnsemble {
    pub models: Vec<MlpParams>,
    pub history: TrainingHistory,
}

/// Initial parameters for model `k` of a run.
pub fn init_models(config: &EnsembleConfig, input_dim: usize) -> Result<Vec<MlpParams>> {
    let sizes = config.layer_sizes(input_dim);
    (0..config.m)
        .map(|k| {
            MlpParams::init(
                &sizes,
                config.activation,
                derive_seed(config.seed, Stream::Init, k as u64),
            )
        })
        .collect()
}

/// Jointly trains `config.m` networks on `data`. With `m = 1` this is
/// ordinary training.
pub fn train_ensemble(data: &Dataset, config: &EnsembleConfig) -> Result<TrainedEnsemble> {
    let models = init_models(config, data.dim())?;
    train_from(models, data, config)
}

/// Like [`train_ensemble`] but from given initial parameters.
pub fn train_from(
    mut models: Vec<MlpParams>,
    data: &Dataset,
    config: &EnsembleConfig,
) -> Result<TrainedEnsemble> {
    let warnings = config.validate(data.dim())?;
    for w in &warnings {
        log::warn!("{w}");
    }
    if models.len() != config.m {
        return Err(Error::InvalidConfig(format!(
            "{} initial models for M = {}",
            models.len(),
            config.m
        )));
    }
    if !data.has_both_labels() {
        return Err(Error::InvalidData("training data needs both labels".into()));
    }
    if models.iter().any(|m| m.layer_sizes()[0] != data.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "models expect a different input dimension than the data's {}",
            data.dim()
        )));
    }

    let initial = lit_objective(&models, data.x(), data.y(), config.lambda, config.eps_stab);
    let initial_cross_entropy: f64 = initial.cross_entropy.iter().sum();
    let initial_penalty = config.lambda * initial.penalty;
    let initial_penalty_ratio = initial_penalty / initial_cross_entropy;
    log::info!(
        "initial cross-entropy {initial_cross_entropy:.4}, lambda*penalty {initial_penalty:.4} \
         (ratio {initial_penalty_ratio:.4})"
    );

    let adam = config.adam();
    let mut states: Vec<AdamState> = models
        .iter()
        .map(|m| AdamState::new(m.num_parameters()))
        .collect();
    let mut shuffle = stream_rng(config.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut tapes: HashMap<usize, ObjectiveTape> = HashMap::new();
    let dim = data.dim();
    let n_pairs = pairs(config.m);
    let mut xb = Vec::with_capacity(config.batch_size * dim);
    let mut yb = Vec::with_capacity(config.batch_size);
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let mut ce_sum = vec![0.0; config.m];
        let mut correct = vec![0usize; config.m];
        let mut penalty_sum = 0.0;
        let mut objective_sum = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            xb.clear();
            yb.clear();
            for &i in idx {
                xb.extend_from_slice(data.row(i));
                yb.push(data.y()[i]);
            }
            let tape = match tapes.entry(idx.len()) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => e.insert(ObjectiveTape::build(
                    &models,
                    idx.len(),
                    config.lambda,
                    config.eps_stab,
                )?),
            };
            let out = tape.evaluate(&models, &xb, &yb)?;
            if !out.value.total.is_finite() || !out.gradients.iter().all(MlpGradient::is_finite) {
                return Err(Error::NonFinite {
                    epoch,
                    batch,
                    value: out.value.total,
                });
            }
            let w = idx.len() as f64;
            for k in 0..config.m {
                ce_sum[k] += out.value.cross_entropy[k] * w;
                correct[k] += out.logits[k]
                    .iter()
                    .zip(&yb)
                    .filter(|(&l, &y)| u8::from(crate::autodiff::logistic(l) >= 0.5) == y)
                    .count();
            }
            penalty_sum += out.value.penalty * w;
            objective_sum += out.value.total * w;
            for ((model, state), grad) in models.iter_mut().zip(&mut states).zip(&out.gradients) {
                state.update(model.parameters_mut(), grad.slices(), &adam);
            }
        }
        let n = data.len() as f64;
        let record = EpochRecord {
            epoch,
            cross_entropy: ce_sum.iter().map(|s| s / n).collect(),
            train_accuracy: correct.iter().map(|&c| c as f64 / n).collect(),
            mean_cos2: if n_pairs == 0 {
                0.0
            } else {
                penalty_sum / n / n_pairs as f64
            },
            objective: objective_sum / n,
        };
        log::debug!(
            "epoch {epoch}: objective {:.5}, mean cos2 {:.4}, acc {:?}",
            record.objective,
            record.mean_cos2,
            record.train_accuracy
        );
        epochs.push(record);
    }

    let final_train_accuracy = models
        .iter()
        .map(|m| crate::models::accuracy(m, data.x(), data.y()))
        .collect();
    Ok(TrainedEnsemble {
        models,
        history: TrainingHistory {
            epochs,
            final_train_accuracy,
            initial_cross_entropy,
            initial_penalty,
            initial_penalty_ratio,
            warnings,
        },
    })
}
