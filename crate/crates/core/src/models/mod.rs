//! Classifier model classes.
//!
//! [`MlpParams`] is the differentiable class used by local independence
//! training; a network with no hidden layer is plain logistic regression.
//! [`DecisionTree`] and [`RandomForest`] are the non-neural baselines.

mod forest;
mod mlp;
mod tree;

pub use forest::{ForestConfig, RandomForest};
pub use mlp::{
    input_gradient_expression, Activation, MlpExpressions, MlpGradient, MlpLeaves, MlpParams,
};
pub use tree::{DecisionTree, TreeNode, TreeParams};

/// A binary classifier producing a probability for label 1.
pub trait Classifier {
    fn input_dim(&self) -> usize;

    fn probability(&self, x: &[f64]) -> f64;

    /// Rounded prediction; a probability of exactly 0.5 rounds to 1.
    fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.probability(x) >= 0.5)
    }
}

/// A scorer with a log-odds output and an analytic input gradient of it.
pub trait LogOddsModel {
    fn input_dim(&self) -> usize;

    fn logit(&self, x: &[f64]) -> f64;

    fn logit_gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Fraction of rows of `x` (row-major, `dim` columns) whose prediction equals `y`.
pub fn accuracy<C: Classifier + ?Sized>(model: &C, x: &[f64], y: &[u8]) -> f64 {
    let dim = model.input_dim();
    let hits = x
        .chunks_exact(dim)
        .zip(y)
        .filter(|(row, &label)| model.predict(row) == label)
        .count();
    hits as f64 / y.len() as f64
}
