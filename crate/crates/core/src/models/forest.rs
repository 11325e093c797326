//! Bootstrap-aggregated CART trees.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::models::{Classifier, DecisionTree, TreeParams};
use crate::rng::{derive_seed, rng, Stream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` uses `⌊√D⌋`.
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    bootstrap_seeds: Vec<u64>,
}

impl RandomForest {
    /// Each tree sees a bootstrap resample of the rows and a random feature
    /// subset per split, both drawn from its own derived seed.
    pub fn fit(x: &[f64], dim: usize, y: &[u8], config: &ForestConfig, seed: u64) -> Result<Self> {
        if config.n_trees == 0 {
            return Err(Error::InvalidConfig("forest needs at least one tree".into()));
        }
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidData("cannot fit a forest on zero rows".into()));
        }
        let max_features = config
            .max_features
            .unwrap_or_else(|| ((dim as f64).sqrt().floor() as usize).max(1));
        let params = TreeParams {
            max_depth: config.max_depth,
            min_leaf: config.min_leaf,
            max_features: Some(max_features),
        };
        let bootstrap_seeds: Vec<u64> = (0..config.n_trees as u64)
            .map(|t| derive_seed(seed, Stream::Forest, t))
            .collect();
        let trees = bootstrap_seeds
            .iter()
            .map(|&s| {
                let mut r = rng(s);
                let rows = (0..n).map(|_| r.random_range(0..n)).collect();
                DecisionTree::fit_rows(x, dim, y, rows, &params, &mut r)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            trees,
            bootstrap_seeds,
        })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn bootstrap_seeds(&self) -> &[u64] {
        &self.bootstrap_seeds
    }
}

impl Classifier for RandomForest {
    fn input_dim(&self) -> usize {
        self.trees[0].n_features()
    }

    /// Mean of the trees' leaf probabilities.
    fn probability(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.leaf_probability(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_trees_rejected() {
        let cfg = ForestConfig {
            n_trees: 0,
            ..ForestConfig::default()
        };
        assert!(RandomForest::fit(&[1.0], 1, &[1], &cfg, 0).is_err());
    }

    #[test]
    fn single_tree_on_constant_labels_matches_tree() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = vec![0, 0, 0];
        let cfg = ForestConfig {
            n_trees: 1,
            ..ForestConfig::default()
        };
        let f = RandomForest::fit(&x, 2, &y, &cfg, 9).unwrap();
        let t = DecisionTree::fit(&x, 2, &y, &TreeParams::default()).unwrap();
        assert_eq!(f.trees()[0], t);
        assert_eq!(f.probability(&[0.0, 0.0]), t.probability(&[0.0, 0.0]));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let x: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64).collect();
        let y: Vec<u8> = (0..100).map(|i| u8::from(x[2 * i] > x[2 * i + 1])).collect();
        let cfg = ForestConfig {
            n_trees: 10,
            ..ForestConfig::default()
        };
        let a = RandomForest::fit(&x, 2, &y, &cfg, 5).unwrap();
        assert_eq!(a, RandomForest::fit(&x, 2, &y, &cfg, 5).unwrap());
        assert_ne!(a, RandomForest::fit(&x, 2, &y, &cfg, 6).unwrap());
    }
}
