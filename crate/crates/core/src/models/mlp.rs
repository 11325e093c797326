use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, logistic, softplus, Bindings, Gradients, NodeId, Shape, Tape};
use crate::models::{Classifier, LogOddsModel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softplus,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => softplus(z),
            Activation::Relu => z.max(0.0),
        }
    }

    /// First derivative; relu uses 0 at the kink.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => logistic(z),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softplus" => Ok(Activation::Softplus),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidConfig(format!("unknown activation {other:?}"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Softplus => "softplus",
            Activation::Relu => "relu",
        })
    }
}

/// A fully connected network with one logit output.
///
/// `weights[l]` is the row-major `layer_sizes[l + 1] × layer_sizes[l]` matrix
/// of layer `l`; hidden layers apply `activation`, the output layer is linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMlp")]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawMlp {
    layer_sizes: Vec<usize>,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl TryFrom<RawMlp> for MlpParams {
    type Error = Error;

    fn try_from(raw: RawMlp) -> Result<Self> {
        MlpParams::from_parts(raw.layer_sizes, raw.activation, raw.weights, raw.biases)
    }
}

fn check_layer_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidModel(format!(
            "need at least input and output layer sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidModel(format!("zero-width layer in {layer_sizes:?}")));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(Error::InvalidModel(format!(
            "output layer must have width 1, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl MlpParams {
    /// Zero-mean Gaussian weights with standard deviation `1/√fan_in`, zero biases.
    pub fn init(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        check_layer_sizes(layer_sizes)?;
        let mut rng = crate::rng::rng(seed);
        let weights = layer_sizes
            .windows(2)
            .map(|w| {
                let scale = 1.0 / (w[0] as f64).sqrt();
                (0..w[0] * w[1])
                    .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        check_layer_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            weights: layer_sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect(),
            biases: layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn from_parts(
        layer_sizes: Vec<usize>,
        activation: Activation,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_layer_sizes(&layer_sizes)?;
        let layers = layer_sizes.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::InvalidModel(format!(
                "{layers} layers but {} weight and {} bias arrays",
                weights.len(),
                biases.len()
            )));
        }
        for (l, w) in layer_sizes.windows(2).enumerate() {
            if weights[l].len() != w[0] * w[1] || biases[l].len() != w[1] {
                return Err(Error::InvalidModel(format!(
                    "layer {l}: expected {}x{} weights and {} biases",
                    w[1], w[0], w[1]
                )));
            }
        }
        let params = Self {
            layer_sizes,
            activation,
            weights,
            biases,
        };
        if !params.parameters().all(|s| s.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        Ok(params)
    }

    /// Logistic regression with the given weights and bias.
    pub fn linear(weights: Vec<f64>, bias: f64) -> Result<Self> {
        let d = weights.len();
        Self::from_parts(vec![d, 1], Activation::Softplus, vec![weights], vec![vec![bias]])
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().map(<[f64]>::len).sum()
    }

    /// Parameter slices in layer order, weights before biases.
    pub fn parameters(&self) -> impl Iterator<Item = &[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.parameters().flatten().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_parameters(), "flat parameter length");
        let mut rest = flat;
        for s in self.parameters_mut() {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
    }

    /// Pre-activations of every layer; the last entry holds the logit.
    fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(x.len(), self.layer_sizes[0], "input dimension");
        let layers = self.weights.len();
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(layers);
        let mut a = x.to_vec();
        for l in 0..layers {
            let cols = self.layer_sizes[l];
            let z: Vec<f64> = self.weights[l]
                .chunks_exact(cols)
                .zip(&self.biases[l])
                .map(|(row, b)| autodiff::dot(row, &a) + b)
                .collect();
            if l + 1 < layers {
                a = z.iter().map(|&v| self.activation.apply(v)).collect();
            }
            zs.push(z);
        }
        zs
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.pre_activations(x).last().unwrap()[0]
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        logistic(self.logit(x))
    }

    /// `∇ₓ logit` by the layered chain rule.
    pub fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        let zs = self.pre_activations(x);
        let layers = self.weights.len();
        let mut g = self.weights[layers - 1].clone();
        for l in (0..layers - 1).rev() {
            for (gi, &z) in g.iter_mut().zip(&zs[l]) {
                *gi *= self.activation.derivative(z);
            }
            let cols = self.layer_sizes[l];
            let mut next = vec![0.0; cols];
            for (&gi, row) in g.iter().zip(self.weights[l].chunks_exact(cols)) {
                for (n, w) in next.iter_mut().zip(row) {
                    *n += w * gi;
                }
            }
            g = next;
        }
        g
    }

    /// Records this network's parameters as leaves of `tape`.
    pub fn register(&self, tape: &mut Tape) -> MlpLeaves {
        let (weights, biases) = self
            .layer_sizes
            .windows(2)
            .map(|w| {
                (
                    tape.parameter(Shape::Matrix {
                        rows: w[1],
                        cols: w[0],
                    }),
                    tape.parameter(Shape::Vector(w[1])),
                )
            })
            .unzip();
        MlpLeaves {
            layer_sizes: self.layer_sizes.clone(),
            activation: self.activation,
            weights,
            biases,
        }
    }
}

impl Classifier for MlpParams {
    fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    fn probability(&self, x: &[f64]) -> f64 {
        MlpParams::probability(self, x)
    }
}

impl LogOddsModel for MlpParams {
    fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    fn logit(&self, x: &[f64]) -> f64 {
        MlpParams::logit(self, x)
    }

    fn logit_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.input_gradient(x)
    }
}

/// Parameter leaves of one network on a tape.
#[derive(Clone, Debug)]
pub struct MlpLeaves {
    layer_sizes: Vec<usize>,
    activation: Activation,
    weights: Vec<NodeId>,
    biases: Vec<NodeId>,
}

/// Graph nodes for a network evaluated at one input.
#[derive(Clone, Copy, Debug)]
pub struct MlpExpressions {
    pub logit: NodeId,
    /// `∇ₓ logit`, itself differentiable with respect to the parameters.
    pub input_gradient: NodeId,
}

impl MlpLeaves {
    pub fn bind<'a>(&self, params: &'a MlpParams, bindings: &mut Bindings<'a>) {
        assert_eq!(self.layer_sizes, params.layer_sizes, "architecture mismatch");
        for (l, (&w, &b)) in self.weights.iter().zip(&self.biases).enumerate() {
            bindings.bind(w, &params.weights[l]).bind(b, &params.biases[l]);
        }
    }

    /// Builds the logit and its analytic input gradient at input node `x`.
    ///
    /// The gradient is `W₁ᵀ D₁ ⋯ W_{L-1}ᵀ D_{L-1} w_L` where `D_l` holds the
    /// activation derivatives at layer `l`; the pre-activations are shared with
    /// the logit.
    pub fn expressions(&self, tape: &mut Tape, x: NodeId) -> autodiff::Result<MlpExpressions> {
        let layers = self.weights.len();
        let mut pre = Vec::with_capacity(layers);
        let mut a = x;
        for l in 0..layers {
            let wx = tape.matvec(self.weights[l], a)?;
            let z = tape.add(wx, self.biases[l])?;
            if l + 1 < layers {
                a = match self.activation {
                    Activation::Softplus => tape.softplus(z)?,
                    Activation::Relu => tape.relu(z)?,
                };
            }
            pre.push(z);
        }
        let logit = tape.sum(pre[layers - 1])?;

        let one = tape.constant(Shape::Vector(1), vec![1.0])?;
        let mut g = tape.matvec_transposed(self.weights[layers - 1], one)?;
        for l in (0..layers - 1).rev() {
            let d = match self.activation {
                Activation::Softplus => tape.logistic(pre[l])?,
                Activation::Relu => tape.step(pre[l])?,
            };
            let gd = tape.mul(g, d)?;
            g = tape.matvec_transposed(self.weights[l], gd)?;
        }
        Ok(MlpExpressions {
            logit,
            input_gradient: g,
        })
    }

    pub fn gradient(&self, grads: &Gradients<'_>) -> MlpGradient {
        MlpGradient {
            weights: self.weights.iter().map(|&w| grads.get(w).to_vec()).collect(),
            biases: self.biases.iter().map(|&b| grads.get(b).to_vec()).collect(),
        }
    }

    /// Adds this network's parameter adjoints into `acc`.
    pub fn accumulate_gradient(&self, grads: &Gradients<'_>, acc: &mut MlpGradient) {
        for (dst, &w) in acc.weights.iter_mut().zip(&self.weights) {
            dst.iter_mut().zip(grads.get(w)).for_each(|(d, g)| *d += g);
        }
        for (dst, &b) in acc.biases.iter_mut().zip(&self.biases) {
            dst.iter_mut().zip(grads.get(b)).for_each(|(d, g)| *d += g);
        }
    }
}

/// The `∇ₓ logit` node of a registered network evaluated at `x`.
pub fn input_gradient_expression(
    tape: &mut Tape,
    leaves: &MlpLeaves,
    x: NodeId,
) -> autodiff::Result<NodeId> {
    Ok(leaves.expressions(tape, x)?.input_gradient)
}

/// Parameter-shaped gradient of a scalar with respect to one network.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGradient {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Slices in the same order as [`MlpParams::parameters`].
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|v| v.is_finite()))
    }
}
