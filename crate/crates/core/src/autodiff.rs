//! Reverse-mode differentiation over a recorded computation graph.
//!
//! A [`Tape`] records operations symbolically (shapes are inferred and checked
//! at build time). Values live in a flat arena: [`Tape::forward`] fills it from
//! a set of leaf [`Bindings`], and [`Evaluation::backward`] accumulates adjoints
//! into a second arena of the same layout. Because the tape is only a recipe it
//! can be built once and re-evaluated with fresh bindings on every step.
//!
//! Only first-order reverse mode is implemented. Objectives that contain input
//! gradients of a model are expressed by building the input gradient into the
//! graph analytically (see [`crate::models::MlpLeaves::expressions`]); the
//! result is an ordinary node that `backward` differentiates like any other.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch at node {node}: {detail}")]
    ShapeMismatch { node: usize, detail: String },
    #[error("leaf node {node} has no binding")]
    MissingBinding { node: usize },
    #[error("seed node {node} is not a scalar")]
    NonScalarSeed { node: usize },
    #[error("node {node} does not belong to this tape")]
    UnknownNode { node: usize },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Index of a node in its tape. Parents always have smaller ids than children.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    /// Row-major dense matrix.
    Matrix { rows: usize, cols: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, Shape::Scalar)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Constant(Vec<f64>),
    Parameter,
    Input,
    /// Elementwise; a scalar operand broadcasts.
    Add(NodeId, NodeId),
    /// Elementwise; a scalar operand broadcasts.
    Mul(NodeId, NodeId),
    /// `A v` for a matrix `A` and vector `v`.
    MatVec(NodeId, NodeId),
    /// `Aᵀ v` for a matrix `A` and vector `v`.
    MatVecT(NodeId, NodeId),
    Dot(NodeId, NodeId),
    Softplus(NodeId),
    Relu(NodeId),
    /// Heaviside step `1[z > 0]`, the derivative of relu. Its own derivative is 0.
    Step(NodeId),
    Logistic(NodeId),
    Log(NodeId),
    Negate(NodeId),
    Reciprocal(NodeId),
    Square(NodeId),
    Sum(NodeId),
}

impl Op {
    pub fn parents(&self) -> Vec<NodeId> {
        use Op::*;
        match *self {
            Constant(_) | Parameter | Input => Vec::new(),
            Add(a, b) | Mul(a, b) | MatVec(a, b) | MatVecT(a, b) | Dot(a, b) => vec![a, b],
            Softplus(a) | Relu(a) | Step(a) | Logistic(a) | Log(a) | Negate(a)
            | Reciprocal(a) | Square(a) | Sum(a) => vec![a],
        }
    }

    pub fn name(&self) -> &'static str {
        use Op::*;
        match self {
            Constant(_) => "constant",
            Parameter => "parameter",
            Input => "input",
            Add(..) => "add",
            Mul(..) => "multiply",
            MatVec(..) => "matvec",
            MatVecT(..) => "matvec_transposed",
            Dot(..) => "dot",
            Softplus(_) => "softplus",
            Relu(_) => "relu",
            Step(_) => "step",
            Logistic(_) => "logistic",
            Log(_) => "log",
            Negate(_) => "negate",
            Reciprocal(_) => "reciprocal",
            Square(_) => "square",
            Sum(_) => "sum",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub shape: Shape,
    offset: usize,
    /// Whether any parameter or input leaf is upstream of this node.
    differentiable: bool,
}

impl Node {
    pub fn parents(&self) -> Vec<NodeId> {
        self.op.parents()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    parameters: Vec<NodeId>,
    inputs: Vec<NodeId>,
    arena_len: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].shape
    }

    pub fn parameter_leaves(&self) -> &[NodeId] {
        &self.parameters
    }

    pub fn input_leaves(&self) -> &[NodeId] {
        &self.inputs
    }

    fn push(&mut self, op: Op, shape: Shape) -> NodeId {
        let differentiable = match &op {
            Op::Constant(_) => false,
            Op::Parameter | Op::Input => true,
            other => other.parents().iter().any(|p| self.nodes[p.0].differentiable),
        };
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            shape,
            offset: self.arena_len,
            differentiable,
        });
        self.arena_len += shape.len();
        id
    }

    fn check(&self, id: NodeId) -> Result<Shape> {
        self.nodes
            .get(id.0)
            .map(|n| n.shape)
            .ok_or(AutodiffError::UnknownNode { node: id.0 })
    }

    fn mismatch(&self, detail: String) -> AutodiffError {
        AutodiffError::ShapeMismatch {
            node: self.nodes.len(),
            detail,
        }
    }

    pub fn parameter(&mut self, shape: Shape) -> NodeId {
        let id = self.push(Op::Parameter, shape);
        self.parameters.push(id);
        id
    }

    pub fn input(&mut self, shape: Shape) -> NodeId {
        let id = self.push(Op::Input, shape);
        self.inputs.push(id);
        id
    }

    pub fn constant(&mut self, shape: Shape, values: Vec<f64>) -> Result<NodeId> {
        if values.len() != shape.len() {
            return Err(self.mismatch(format!(
                "constant of shape {shape:?} given {} values",
                values.len()
            )));
        }
        Ok(self.push(Op::Constant(values), shape))
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.push(Op::Constant(vec![value]), Shape::Scalar)
    }

    fn broadcast(&mut self, op: Op, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.check(a)?, self.check(b)?);
        let shape = if sa == sb || sb.is_scalar() {
            sa
        } else if sa.is_scalar() {
            sb
        } else {
            return Err(self.mismatch(format!("{} of {sa:?} and {sb:?}", op.name())));
        };
        Ok(self.push(op, shape))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.broadcast(Op::Add(a, b), a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.broadcast(Op::Mul(a, b), a, b)
    }

    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        match (self.check(m)?, self.check(v)?) {
            (Shape::Matrix { rows, cols }, Shape::Vector(n)) if n == cols => {
                Ok(self.push(Op::MatVec(m, v), Shape::Vector(rows)))
            }
            (sm, sv) => Err(self.mismatch(format!("matvec of {sm:?} and {sv:?}"))),
        }
    }

    pub fn matvec_transposed(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        match (self.check(m)?, self.check(v)?) {
            (Shape::Matrix { rows, cols }, Shape::Vector(n)) if n == rows => {
                Ok(self.push(Op::MatVecT(m, v), Shape::Vector(cols)))
            }
            (sm, sv) => Err(self.mismatch(format!("matvec_transposed of {sm:?} and {sv:?}"))),
        }
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        match (self.check(a)?, self.check(b)?) {
            (Shape::Vector(n), Shape::Vector(m)) if n == m => {
                Ok(self.push(Op::Dot(a, b), Shape::Scalar))
            }
            (sa, sb) => Err(self.mismatch(format!("dot of {sa:?} and {sb:?}"))),
        }
    }

    fn unary(&mut self, op: Op, a: NodeId) -> Result<NodeId> {
        let shape = self.check(a)?;
        Ok(self.push(op, shape))
    }

    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Softplus(a), a)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Relu(a), a)
    }

    pub fn step(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Step(a), a)
    }

    pub fn logistic(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Logistic(a), a)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Log(a), a)
    }

    pub fn negate(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Negate(a), a)
    }

    pub fn reciprocal(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Reciprocal(a), a)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Square(a), a)
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        Ok(self.push(Op::Sum(a), Shape::Scalar))
    }

    /// Left-to-right sum of scalar nodes.
    pub fn add_all(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| self.mismatch("sum of no terms".into()))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    pub fn forward<'t>(&'t self, bindings: &Bindings<'_>) -> Result<Evaluation<'t>> {
        let mut data = vec![0.0; self.arena_len];
        for (i, node) in self.nodes.iter().enumerate() {
            let len = node.shape.len();
            let (done, rest) = data.split_at_mut(node.offset);
            let out = &mut rest[..len];
            let val = |id: NodeId| {
                let n = &self.nodes[id.0];
                &done[n.offset..n.offset + n.shape.len()]
            };
            match &node.op {
                Op::Constant(v) => out.copy_from_slice(v),
                Op::Parameter | Op::Input => {
                    let bound = bindings
                        .get(NodeId(i))
                        .ok_or(AutodiffError::MissingBinding { node: i })?;
                    if bound.len() != len {
                        return Err(AutodiffError::ShapeMismatch {
                            node: i,
                            detail: format!(
                                "leaf of shape {:?} bound to {} values",
                                node.shape,
                                bound.len()
                            ),
                        });
                    }
                    out.copy_from_slice(bound);
                }
                Op::Add(a, b) => zip_broadcast(out, val(*a), val(*b), |x, y| x + y),
                Op::Mul(a, b) => zip_broadcast(out, val(*a), val(*b), |x, y| x * y),
                Op::MatVec(m, v) => {
                    let (mat, vec) = (val(*m), val(*v));
                    let cols = vec.len();
                    for (o, row) in out.iter_mut().zip(mat.chunks_exact(cols)) {
                        *o = dot(row, vec);
                    }
                }
                Op::MatVecT(m, v) => {
                    let (mat, vec) = (val(*m), val(*v));
                    let cols = out.len();
                    out.fill(0.0);
                    for (&vi, row) in vec.iter().zip(mat.chunks_exact(cols)) {
                        for (o, &w) in out.iter_mut().zip(row) {
                            *o += w * vi;
                        }
                    }
                }
                Op::Dot(a, b) => out[0] = dot(val(*a), val(*b)),
                Op::Softplus(a) => map(out, val(*a), softplus),
                Op::Relu(a) => map(out, val(*a), |z| if z > 0.0 { z } else { 0.0 }),
                Op::Step(a) => map(out, val(*a), |z| if z > 0.0 { 1.0 } else { 0.0 }),
                Op::Logistic(a) => map(out, val(*a), logistic),
                Op::Log(a) => map(out, val(*a), f64::ln),
                Op::Negate(a) => map(out, val(*a), |z| -z),
                Op::Reciprocal(a) => map(out, val(*a), f64::recip),
                Op::Square(a) => map(out, val(*a), |z| z * z),
                Op::Sum(a) => out[0] = val(*a).iter().sum(),
            }
        }
        Ok(Evaluation { tape: self, data })
    }
}

/// Leaf values for one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Bindings<'a> {
    slots: HashMap<NodeId, &'a [f64]>,
}

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, leaf: NodeId, value: &'a [f64]) -> &mut Self {
        self.slots.insert(leaf, value);
        self
    }

    pub fn get(&self, leaf: NodeId) -> Option<&'a [f64]> {
        self.slots.get(&leaf).copied()
    }
}

/// Node values produced by [`Tape::forward`].
#[derive(Clone, Debug)]
pub struct Evaluation<'t> {
    tape: &'t Tape,
    data: Vec<f64>,
}

impl<'t> Evaluation<'t> {
    pub fn value(&self, id: NodeId) -> &[f64] {
        let n = &self.tape.nodes[id.0];
        &self.data[n.offset..n.offset + n.shape.len()]
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id)[0]
    }

    /// Adjoints of every node with respect to the scalar `seed`.
    pub fn backward(&self, seed: NodeId) -> Result<Gradients<'t>> {
        let tape = self.tape;
        let seed_node = tape
            .nodes
            .get(seed.0)
            .ok_or(AutodiffError::UnknownNode { node: seed.0 })?;
        if !seed_node.shape.is_scalar() {
            return Err(AutodiffError::NonScalarSeed { node: seed.0 });
        }
        let mut adj = vec![0.0; tape.arena_len];
        let mut touched = vec![false; tape.nodes.len()];
        adj[seed_node.offset] = 1.0;
        touched[seed.0] = true;

        for i in (0..=seed.0).rev() {
            let node = &tape.nodes[i];
            if !touched[i] || !node.differentiable {
                continue;
            }
            let (lo, hi) = adj.split_at_mut(node.offset);
            let g = &hi[..node.shape.len()];
            let out = &self.data[node.offset..node.offset + node.shape.len()];
            let val = |id: NodeId| self.value(id);
            // Accumulates into a parent's adjoint slice if it needs one.
            let mut with_parent = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
                let p = &tape.nodes[id.0];
                if p.differentiable {
                    touched[id.0] = true;
                    f(&mut lo[p.offset..p.offset + p.shape.len()]);
                }
            };
            match &node.op {
                Op::Constant(_) | Op::Parameter | Op::Input | Op::Step(_) => {}
                Op::Add(a, b) => {
                    with_parent(*a, &mut |pa| accumulate_reduced(pa, g, |gi, _| gi));
                    with_parent(*b, &mut |pb| accumulate_reduced(pb, g, |gi, _| gi));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    with_parent(*a, &mut |pa| {
                        accumulate_reduced(pa, g, |gi, k| gi * at(vb, k))
                    });
                    with_parent(*b, &mut |pb| {
                        accumulate_reduced(pb, g, |gi, k| gi * at(va, k))
                    });
                }
                Op::MatVec(m, v) => {
                    let (mat, vec) = (val(*m), val(*v));
                    let cols = vec.len();
                    with_parent(*m, &mut |pm| {
                        for (row, &gi) in pm.chunks_exact_mut(cols).zip(g) {
                            if gi != 0.0 {
                                axpy(row, gi, vec);
                            }
                        }
                    });
                    with_parent(*v, &mut |pv| {
                        for (row, &gi) in mat.chunks_exact(cols).zip(g) {
                            if gi != 0.0 {
                                axpy(pv, gi, row);
                            }
                        }
                    });
                }
                Op::MatVecT(m, v) => {
                    let (mat, vec) = (val(*m), val(*v));
                    let cols = g.len();
                    with_parent(*m, &mut |pm| {
                        for (row, &vi) in pm.chunks_exact_mut(cols).zip(vec) {
                            if vi != 0.0 {
                                axpy(row, vi, g);
                            }
                        }
                    });
                    with_parent(*v, &mut |pv| {
                        for (p, row) in pv.iter_mut().zip(mat.chunks_exact(cols)) {
                            *p += dot(row, g);
                        }
                    });
                }
                Op::Dot(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    with_parent(*a, &mut |pa| axpy(pa, g[0], vb));
                    with_parent(*b, &mut |pb| axpy(pb, g[0], va));
                }
                Op::Softplus(a) => {
                    let va = val(*a);
                    with_parent(*a, &mut |pa| {
                        accumulate_reduced(pa, g, |gi, k| gi * logistic(va[k]))
                    });
                }
                Op::Relu(a) => {
                    let va = val(*a);
                    with_parent(*a, &mut |pa| {
                        accumulate_reduced(pa, g, |gi, k| if va[k] > 0.0 { gi } else { 0.0 })
                    });
                }
                Op::Logistic(a) => with_parent(*a, &mut |pa| {
                    accumulate_reduced(pa, g, |gi, k| gi * out[k] * (1.0 - out[k]))
                }),
                Op::Log(a) => {
                    let va = val(*a);
                    with_parent(*a, &mut |pa| accumulate_reduced(pa, g, |gi, k| gi / va[k]));
                }
                Op::Negate(a) => with_parent(*a, &mut |pa| accumulate_reduced(pa, g, |gi, _| -gi)),
                Op::Reciprocal(a) => with_parent(*a, &mut |pa| {
                    accumulate_reduced(pa, g, |gi, k| -gi * out[k] * out[k])
                }),
                Op::Square(a) => {
                    let va = val(*a);
                    with_parent(*a, &mut |pa| {
                        accumulate_reduced(pa, g, |gi, k| 2.0 * va[k] * gi)
                    });
                }
                Op::Sum(a) => with_parent(*a, &mut |pa| pa.iter_mut().for_each(|p| *p += g[0])),
            }
        }
        Ok(Gradients { tape, adj })
    }
}

/// Adjoints produced by [`Evaluation::backward`].
#[derive(Clone, Debug)]
pub struct Gradients<'t> {
    tape: &'t Tape,
    adj: Vec<f64>,
}

impl Gradients<'_> {
    pub fn get(&self, id: NodeId) -> &[f64] {
        let n = &self.tape.nodes[id.0];
        &self.adj[n.offset..n.offset + n.shape.len()]
    }

    pub fn parameters(&self) -> impl Iterator<Item = (NodeId, &[f64])> {
        self.tape.parameters.iter().map(|&id| (id, self.get(id)))
    }
}

/// Four interleaved partial sums, so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn at(v: &[f64], k: usize) -> f64 {
    if v.len() == 1 {
        v[0]
    } else {
        v[k]
    }
}

fn map(out: &mut [f64], a: &[f64], f: impl Fn(f64) -> f64) {
    for (o, &x) in out.iter_mut().zip(a) {
        *o = f(x);
    }
}

fn zip_broadcast(out: &mut [f64], a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = f(at(a, k), at(b, k));
    }
}

/// Adds `f(g[k], k)` into `parent`, summing over `k` when the parent was broadcast.
fn accumulate_reduced(parent: &mut [f64], g: &[f64], f: impl Fn(f64, usize) -> f64) {
    if parent.len() == g.len() {
        for (k, (p, &gk)) in parent.iter_mut().zip(g).enumerate() {
            *p += f(gk, k);
        }
    } else {
        parent[0] += g.iter().enumerate().map(|(k, &gk)| f(gk, k)).sum::<f64>();
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Central-difference estimate of the gradient of `f` at `point`.
pub fn central_differences(f: impl Fn(&[f64]) -> f64, point: &[f64], step: f64) -> Vec<f64> {
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let up = f(&x);
            x[i] = orig - step;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Worst relative error between two gradient vectors, with denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Builds a scalar expression of one vector input leaf and compares its
/// reverse-mode gradient at `point` against central differences.
///
/// Returns the worst relative error. The tape is built once and re-evaluated
/// for every perturbed point.
pub fn grad_check<F>(build: F, point: &[f64], step: f64) -> Result<f64>
where
    F: FnOnce(&mut Tape, NodeId) -> Result<NodeId>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut tape = Tape::new();
    let leaf = tape.input(Shape::Vector(point.len()));
    let out = build(&mut tape, leaf)?;
    let eval_at = |x: &[f64]| -> Result<Evaluation<'_>> {
        let mut b = Bindings::new();
        b.bind(leaf, x);
        tape.forward(&b)
    };
    let analytic = eval_at(point)?.backward(out)?.get(leaf).to_vec();
    let failure = std::cell::RefCell::new(None);
    let numeric = central_differences(
        |x| match eval_at(x) {
            Ok(e) => e.scalar(out),
            Err(err) => {
                failure.borrow_mut().get_or_insert(err);
                f64::NAN
            }
        },
        point,
        step,
    );
    if let Some(err) = failure.into_inner() {
        return Err(err);
    }
    Ok(max_relative_error(&analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_scalar(tape: &Tape, out: NodeId, binds: &[(NodeId, &[f64])]) -> f64 {
        let mut b = Bindings::new();
        for &(id, v) in binds {
            b.bind(id, v);
        }
        tape.forward(&b).unwrap().scalar(out)
    }

    #[test]
    fn logistic_and_softplus_at_zero() {
        let mut t = Tape::new();
        let x = t.input(Shape::Scalar);
        let s = t.logistic(x).unwrap();
        let p = t.softplus(x).unwrap();
        let mut b = Bindings::new();
        b.bind(x, &[0.0]);
        let e = t.forward(&b).unwrap();
        assert_eq!(e.scalar(s), 0.5);
        assert!((e.scalar(p) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn linear_form_value_and_gradient() {
        let mut t = Tape::new();
        let w = t.parameter(Shape::Vector(2));
        let x = t.input(Shape::Vector(2));
        let y = t.dot(w, x).unwrap();
        let mut b = Bindings::new();
        b.bind(w, &[1.0, 2.0]).bind(x, &[3.0, 4.0]);
        let e = t.forward(&b).unwrap();
        assert_eq!(e.scalar(y), 11.0);
        let g = e.backward(y).unwrap();
        assert_eq!(g.get(w), &[3.0, 4.0]);
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let th = t.parameter(Shape::Scalar);
        let sq = t.square(th).unwrap();
        let mut b = Bindings::new();
        b.bind(th, &[3.0]);
        let e = t.forward(&b).unwrap();
        assert_eq!(e.backward(sq).unwrap().get(th), &[6.0]);
    }

    #[test]
    fn grad_check_square() {
        let err = grad_check(
            |t, x| {
                let s = t.square(x)?;
                t.sum(s)
            },
            &[3.0],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn non_scalar_seed_rejected() {
        let mut t = Tape::new();
        let x = t.input(Shape::Vector(3));
        let mut b = Bindings::new();
        b.bind(x, &[1.0, 2.0, 3.0]);
        let e = t.forward(&b).unwrap();
        assert_eq!(
            e.backward(x).unwrap_err(),
            AutodiffError::NonScalarSeed { node: 0 }
        );
    }

    #[test]
    fn binding_shape_mismatch_names_node() {
        let mut t = Tape::new();
        let _c = t.scalar(1.0);
        let x = t.input(Shape::Vector(3));
        let mut b = Bindings::new();
        b.bind(x, &[1.0, 2.0]);
        match t.forward(&b).unwrap_err() {
            AutodiffError::ShapeMismatch { node, .. } => assert_eq!(node, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            t.forward(&Bindings::new()).unwrap_err(),
            AutodiffError::MissingBinding { node: 1 }
        );
    }

    #[test]
    fn build_time_shape_errors() {
        let mut t = Tape::new();
        let a = t.input(Shape::Vector(3));
        let b = t.input(Shape::Vector(2));
        assert!(t.dot(a, b).is_err());
        assert!(t.add(a, b).is_err());
        let m = t.parameter(Shape::Matrix { rows: 2, cols: 3 });
        assert!(t.matvec(m, b).is_err());
        let mv = t.matvec(m, a).unwrap();
        assert_eq!(t.shape(mv), Shape::Vector(2));
        let mt = t.matvec_transposed(m, b).unwrap();
        assert_eq!(t.shape(mt), Shape::Vector(3));
    }

    #[test]
    fn repeated_parent_accumulates_both_sides() {
        // d/dx (x * x) = 2x and d/dx (x . x) = 2x
        let mut t = Tape::new();
        let x = t.parameter(Shape::Vector(2));
        let m = t.mul(x, x).unwrap();
        let s = t.sum(m).unwrap();
        let d = t.dot(x, x).unwrap();
        let total = t.add(s, d).unwrap();
        let mut b = Bindings::new();
        b.bind(x, &[1.5, -2.0]);
        let e = t.forward(&b).unwrap();
        assert_eq!(e.backward(total).unwrap().get(x), &[6.0, -8.0]);
    }

    #[test]
    fn scalar_broadcast_gradients_are_reduced() {
        let mut t = Tape::new();
        let a = t.parameter(Shape::Scalar);
        let v = t.parameter(Shape::Vector(3));
        let p = t.mul(a, v).unwrap();
        let q = t.add(p, a).unwrap();
        let s = t.sum(q).unwrap();
        let mut b = Bindings::new();
        b.bind(a, &[2.0]).bind(v, &[1.0, 2.0, 3.0]);
        let e = t.forward(&b).unwrap();
        assert_eq!(eval_scalar(&t, s, &[(a, &[2.0]), (v, &[1.0, 2.0, 3.0])]), 18.0);
        let g = e.backward(s).unwrap();
        assert_eq!(g.get(a), &[9.0]);
        assert_eq!(g.get(v), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn stable_activations_do_not_overflow() {
        assert_eq!(softplus(-1000.0), 0.0);
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(logistic(-1000.0), 0.0);
        assert_eq!(logistic(1000.0), 1.0);
    }
}
