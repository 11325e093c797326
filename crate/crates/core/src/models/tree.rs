//! CART classification tree with Gini impurity.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::models::Classifier;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        probability: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    n_features: usize,
    /// Node 0 is the root.
    nodes: Vec<TreeNode>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

/// `n · gini` for `pos` positives out of `n`.
fn weighted_gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    2.0 * (pos as f64) * ((n - pos) as f64) / n as f64
}

impl DecisionTree {
    /// Fits on all rows of `x` (row-major, `dim` columns).
    pub fn fit(x: &[f64], dim: usize, y: &[u8], params: &TreeParams) -> Result<Self> {
        let rows: Vec<usize> = (0..y.len()).collect();
        Self::fit_rows(x, dim, y, rows, params, &mut crate::rng::rng(0))
    }

    /// Fits on the given row indices, which may repeat (bootstrap samples).
    /// `rng` is only consumed when `params.max_features` restricts the search.
    pub fn fit_rows<R: Rng>(
        x: &[f64],
        dim: usize,
        y: &[u8],
        rows: Vec<usize>,
        params: &TreeParams,
        rng: &mut R,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidData("cannot fit a tree on zero rows".into()));
        }
        if dim == 0 || x.len() != y.len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} feature values for {} labels of dimension {dim}",
                x.len(),
                y.len()
            )));
        }
        if params.min_leaf == 0 {
            return Err(Error::InvalidConfig("min_leaf must be at least 1".into()));
        }
        let mut tree = DecisionTree {
            n_features: dim,
            nodes: Vec::new(),
        };
        tree.grow(x, y, rows, 0, params, rng);
        Ok(tree)
    }

    fn grow<R: Rng>(
        &mut self,
        x: &[f64],
        y: &[u8],
        rows: Vec<usize>,
        depth: usize,
        params: &TreeParams,
        rng: &mut R,
    ) -> usize {
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| y[r] == 1).count();
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            probability: pos as f64 / n as f64,
        });
        let can_split = pos != 0
            && pos != n
            && n >= 2 * params.min_leaf
            && params.max_depth.is_none_or(|d| depth < d);
        if !can_split {
            return id;
        }
        if let Some(best) = self.best_split(x, y, &rows, params, rng) {
            let left = self.grow(x, y, best.left, depth + 1, params, rng);
            let right = self.grow(x, y, best.right, depth + 1, params, rng);
            self.nodes[id] = TreeNode::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right,
            };
        }
        id
    }

    fn best_split<R: Rng>(
        &self,
        x: &[f64],
        y: &[u8],
        rows: &[usize],
        params: &TreeParams,
        rng: &mut R,
    ) -> Option<Candidate> {
        let dim = self.n_features;
        let mut features: Vec<usize> = (0..dim).collect();
        let budget = match params.max_features {
            Some(k) if k < dim => {
                features.shuffle(rng);
                k.max(1)
            }
            _ => dim,
        };
        let n = rows.len();
        let total_pos = rows.iter().filter(|&&r| y[r] == 1).count();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut sorted = rows.to_vec();
        for (examined, &f) in features.iter().enumerate() {
            // Keep drawing features past the budget until some valid split exists.
            if examined >= budget && best.is_some() {
                break;
            }
            sorted.sort_by(|&a, &b| x[a * dim + f].total_cmp(&x[b * dim + f]));
            let mut left_pos = 0;
            for i in 0..n - 1 {
                left_pos += usize::from(y[sorted[i]] == 1);
                let nl = i + 1;
                let nr = n - nl;
                if nl < params.min_leaf || nr < params.min_leaf {
                    continue;
                }
                let (v, next) = (x[sorted[i] * dim + f], x[sorted[i + 1] * dim + f]);
                if v >= next {
                    continue;
                }
                let score = weighted_gini(left_pos, nl) + weighted_gini(total_pos - left_pos, nr);
                if best.is_none_or(|b| score < b.2) {
                    best = Some((f, v, score));
                }
            }
        }
        best.map(|(feature, threshold, _)| {
            let (left, right) = rows
                .iter()
                .copied()
                .partition(|&r| x[r * dim + feature] <= threshold);
            Candidate {
                feature,
                threshold,
                left,
                right,
            }
        })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], id: usize) -> usize {
            match nodes[id] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_probability(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                TreeNode::Leaf { probability } => return probability,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

impl Classifier for DecisionTree {
    fn input_dim(&self) -> usize {
        self.n_features
    }

    fn probability(&self, x: &[f64]) -> f64 {
        self.leaf_probability(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::accuracy;

    #[test]
    fn separable_1d_fits_exactly() {
        let x: Vec<f64> = (-10..10).map(|v| v as f64 + 0.5).collect();
        let y: Vec<u8> = x.iter().map(|&v| u8::from(v >= 0.0)).collect();
        let t = DecisionTree::fit(&x, 1, &y, &TreeParams::default()).unwrap();
        assert_eq!(accuracy(&t, &x, &y), 1.0);
        assert_eq!(t.depth(), 1);
        match t.nodes()[0] {
            TreeNode::Split { threshold, .. } => assert_eq!(threshold, -0.5),
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn pure_labels_give_single_leaf() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let t = DecisionTree::fit(&x, 2, &[1, 1], &TreeParams::default()).unwrap();
        assert_eq!(t.nodes(), &[TreeNode::Leaf { probability: 1.0 }]);
    }

    #[test]
    fn xor_needs_zero_gain_split() {
        let x = vec![-1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0];
        let y = vec![1, 0, 0, 1];
        let t = DecisionTree::fit(&x, 2, &y, &TreeParams::default()).unwrap();
        assert_eq!(accuracy(&t, &x, &y), 1.0);
    }

    #[test]
    fn depth_and_leaf_size_limits() {
        let x: Vec<f64> = (0..16).map(f64::from).collect();
        let y: Vec<u8> = (0..16).map(|i| (i % 2) as u8).collect();
        let p = TreeParams {
            max_depth: Some(2),
            ..TreeParams::default()
        };
        assert!(DecisionTree::fit(&x, 1, &y, &p).unwrap().depth() <= 2);
        let p = TreeParams {
            min_leaf: 8,
            ..TreeParams::default()
        };
        let t = DecisionTree::fit(&x, 1, &y, &p).unwrap();
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn empty_rows_rejected() {
        assert!(DecisionTree::fit(&[], 1, &[], &TreeParams::default()).is_err());
    }
}
