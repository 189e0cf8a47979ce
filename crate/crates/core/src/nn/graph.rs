//! Execution backends for model code.
//!
//! Model forward passes are written once against [`Graph`]. [`Eager`] just
//! evaluates (intermediates are dropped as soon as they are unused), while
//! [`Tape`] records every op so [`Tape::backward`] can replay it in reverse.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::ops;
use crate::nn::tensor::{shape_str, Scalar, Tensor};

pub trait Graph<T: Scalar> {
    type Node: Clone;

    /// A value that never receives a gradient.
    fn constant(&mut self, value: Tensor<T>) -> Self::Node;

    /// A parameter; `trainable` decides whether backward reports a gradient for it.
    fn param(&mut self, value: &Tensor<T>, trainable: bool) -> Self::Node;

    fn value<'a>(&'a self, node: &'a Self::Node) -> &'a Tensor<T>;

    fn conv2d(&mut self, x: &Self::Node, kernel: &Self::Node, bias: &Self::Node) -> Result<Self::Node>;
    fn relu(&mut self, x: &Self::Node) -> Self::Node;
    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn sub(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn concat_channels(&mut self, xs: &[Self::Node]) -> Result<Self::Node>;
    fn pixel_shuffle(&mut self, x: &Self::Node, r: usize) -> Result<Self::Node>;
    /// New leading axis.
    fn stack(&mut self, xs: &[Self::Node]) -> Result<Self::Node>;
    /// Index into the leading axis.
    fn select(&mut self, x: &Self::Node, index: usize) -> Result<Self::Node>;
    /// `n` copies along a new leading axis.
    fn repeat(&mut self, x: &Self::Node, n: usize) -> Result<Self::Node>;
    /// Rows of the leading axis picked by `indices` (repeats allowed).
    fn gather(&mut self, x: &Self::Node, indices: &[usize]) -> Result<Self::Node>;
}

/// Forward-only evaluation.
#[derive(Debug, Default)]
pub struct Eager;

impl<T: Scalar> Graph<T> for Eager {
    type Node = Arc<Tensor<T>>;

    fn constant(&mut self, value: Tensor<T>) -> Self::Node {
        Arc::new(value)
    }

    fn param(&mut self, value: &Tensor<T>, _trainable: bool) -> Self::Node {
        Arc::new(value.clone())
    }

    fn value<'a>(&'a self, node: &'a Self::Node) -> &'a Tensor<T> {
        node
    }

    fn conv2d(&mut self, x: &Self::Node, kernel: &Self::Node, bias: &Self::Node) -> Result<Self::Node> {
        ops::conv2d(x, kernel, bias).map(Arc::new)
    }

    fn relu(&mut self, x: &Self::Node) -> Self::Node {
        Arc::new(ops::relu(x))
    }

    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        a.add(b).map(Arc::new)
    }

    fn sub(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        a.sub(b).map(Arc::new)
    }

    fn concat_channels(&mut self, xs: &[Self::Node]) -> Result<Self::Node> {
        let refs: Vec<&Tensor<T>> = xs.iter().map(|x| &**x).collect();
        ops::concat_channels(&refs).map(Arc::new)
    }

    fn pixel_shuffle(&mut self, x: &Self::Node, r: usize) -> Result<Self::Node> {
        ops::pixel_shuffle(x, r).map(Arc::new)
    }

    fn stack(&mut self, xs: &[Self::Node]) -> Result<Self::Node> {
        let refs: Vec<&Tensor<T>> = xs.iter().map(|x| &**x).collect();
        Tensor::stack(&refs).map(Arc::new)
    }

    fn select(&mut self, x: &Self::Node, index: usize) -> Result<Self::Node> {
        x.select(index).map(Arc::new)
    }

    fn repeat(&mut self, x: &Self::Node, n: usize) -> Result<Self::Node> {
        let refs = vec![&**x; n];
        Tensor::stack(&refs).map(Arc::new)
    }

    fn gather(&mut self, x: &Self::Node, indices: &[usize]) -> Result<Self::Node> {
        x.gather(indices).map(Arc::new)
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Constant,
    Param,
    Conv2d { x: Var, kernel: Var, bias: Var },
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Concat { inputs: Vec<Var>, widths: Vec<usize> },
    PixelShuffle { x: Var, r: usize },
    Stack(Vec<Var>),
    Select { x: Var, index: usize },
    Repeat { x: Var, n: usize },
    Gather { x: Var, indices: Vec<usize> },
    Scale { x: Var, factor: T },
    Sum(Var),
    Dot { x: Var, weights: Tensor<T> },
    L1 { pred: Var, target: Var },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records executed ops for reverse-mode differentiation.
#[derive(Debug)]
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    track_kinks: bool,
    kink_signature: u64,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            track_kinks: false,
            kink_signature: FNV_OFFSET,
        }
    }

    /// A tape that fingerprints the branch taken by every non-smooth op
    /// (ReLU masks, L1 signs). Two evaluations with equal signatures lie in
    /// the same linear region of a piecewise-linear graph.
    pub fn with_kink_tracking() -> Self {
        Tape {
            track_kinks: true,
            ..Self::new()
        }
    }

    pub fn kink_signature(&self) -> u64 {
        self.kink_signature
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn mix_kinks<'a>(&mut self, branches: impl Iterator<Item = i8> + 'a) {
        if !self.track_kinks {
            return;
        }
        let mut h = self.kink_signature;
        for b in branches {
            h ^= b as u8 as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
        self.kink_signature = h;
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = match op {
            Op::Param => true,
            Op::Constant => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::Autograd(format!("variable {} is not on this tape", v.0)))
        }
    }

    pub fn get(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let value = self.get(x).scale(factor);
        self.push(value, Op::Scale { x, factor }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.get(x).sum());
        self.push(value, Op::Sum(x), &[x])
    }

    /// `sum(x * weights)` for a fixed weight tensor.
    pub fn dot(&mut self, x: Var, weights: Tensor<T>) -> Result<Var> {
        let value = self.get(x).zip_map(&weights, "dot", |a, b| a * b)?.sum();
        Ok(self.push(Tensor::scalar(value), Op::Dot { x, weights }, &[x]))
    }

    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let value = ops::l1_loss(self.get(pred), self.get(target))?;
        if self.track_kinks {
            let signs: Vec<i8> = self
                .get(pred)
                .data()
                .iter()
                .zip(self.get(target).data())
                .map(|(&p, &t)| (p > t) as i8 - (p < t) as i8)
                .collect();
            self.mix_kinks(signs.into_iter());
        }
        Ok(self.push(Tensor::scalar(value), Op::L1 { pred, target }, &[pred, target]))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        self.backward_with(loss, T::one())
    }

    /// Reverse pass seeding `d loss = seed`.
    pub fn backward_with(&self, loss: Var, seed: T) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(Error::Autograd("backward called on an empty tape".into()));
        }
        self.check(loss)?;
        if self.get(loss).len() != 1 {
            return Err(Error::Autograd(format!(
                "backward needs a scalar loss, got shape {}",
                shape_str(self.get(loss).shape())
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.get(loss).shape().to_vec(), seed));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Conv2d { x, kernel, bias } => {
                    let want = [self.requires_grad(*x), self.requires_grad(*kernel), self.requires_grad(*bias)];
                    let cg = ops::conv2d_backward(self.get(*x), self.get(*kernel), &g, want)?;
                    accumulate(&mut grads, *x, cg.input)?;
                    accumulate(&mut grads, *kernel, cg.kernel)?;
                    accumulate(&mut grads, *bias, cg.bias)?;
                }
                Op::Relu(x) => {
                    let gi = ops::relu_backward(self.get(*x), &g)?;
                    accumulate(&mut grads, *x, Some(gi))?;
                }
                Op::Add(a, b) => {
                    if self.requires_grad(*a) {
                        accumulate(&mut grads, *a, Some(g.clone()))?;
                    }
                    accumulate(&mut grads, *b, Some(g))?;
                }
                Op::Sub(a, b) => {
                    if self.requires_grad(*a) {
                        accumulate(&mut grads, *a, Some(g.clone()))?;
                    }
                    accumulate(&mut grads, *b, Some(g.map(|v| -v)))?;
                }
                Op::Concat { inputs, widths } => {
                    let parts = ops::split_channels(&g, widths)?;
                    for (v, p) in inputs.iter().zip(parts) {
                        accumulate(&mut grads, *v, Some(p))?;
                    }
                }
                Op::PixelShuffle { x, r } => {
                    accumulate(&mut grads, *x, Some(ops::pixel_unshuffle(&g, *r)?))?;
                }
                Op::Stack(inputs) => {
                    for (v, p) in inputs.iter().zip(g.unstack()?) {
                        accumulate(&mut grads, *v, Some(p))?;
                    }
                }
                Op::Select { x, index } => {
                    let src = self.get(*x);
                    let mut full = Tensor::zeros(src.shape().to_vec());
                    let step = g.len();
                    full.data_mut()[index * step..(index + 1) * step].copy_from_slice(g.data());
                    accumulate(&mut grads, *x, Some(full))?;
                }
                Op::Repeat { x, n } => {
                    let step = g.len() / n;
                    let mut acc = Tensor::zeros(self.get(*x).shape().to_vec());
                    for i in 0..*n {
                        for (a, &b) in acc.data_mut().iter_mut().zip(&g.data()[i * step..(i + 1) * step]) {
                            *a += b;
                        }
                    }
                    accumulate(&mut grads, *x, Some(acc))?;
                }
                Op::Gather { x, indices } => {
                    let mut acc = Tensor::zeros(self.get(*x).shape().to_vec());
                    let step = g.len() / indices.len().max(1);
                    for (k, &i) in indices.iter().enumerate() {
                        let dst = &mut acc.data_mut()[i * step..(i + 1) * step];
                        for (a, &b) in dst.iter_mut().zip(&g.data()[k * step..(k + 1) * step]) {
                            *a += b;
                        }
                    }
                    accumulate(&mut grads, *x, Some(acc))?;
                }
                Op::Scale { x, factor } => {
                    let f = *factor;
                    accumulate(&mut grads, *x, Some(g.map(|v| v * f)))?;
                }
                Op::Sum(x) => {
                    let s = g.data()[0];
                    accumulate(&mut grads, *x, Some(Tensor::full(self.get(*x).shape().to_vec(), s)))?;
                }
                Op::Dot { x, weights } => {
                    let s = g.data()[0];
                    accumulate(&mut grads, *x, Some(weights.scale(s)))?;
                }
                Op::L1 { pred, target } => {
                    let s = g.data()[0];
                    let (p, t) = (self.get(*pred), self.get(*target));
                    if self.requires_grad(*pred) {
                        accumulate(&mut grads, *pred, Some(ops::l1_loss_backward(p, t, s)?))?;
                    }
                    if self.requires_grad(*target) {
                        accumulate(&mut grads, *target, Some(ops::l1_loss_backward(t, p, s)?))?;
                    }
                }
            }
        }

        // Parameters that did not influence the loss still get an (all-zero) entry.
        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Param) && grads[idx].is_none() {
                grads[idx] = Some(Tensor::zeros(node.value.shape().to_vec()));
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Option<Tensor<T>>) -> Result<()> {
    let Some(g) = g else { return Ok(()) };
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Result of a reverse pass: one gradient per trainable parameter, plus
/// gradients of any differentiable intermediate that was reached.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<T: Scalar> Graph<T> for Tape<T> {
    type Node = Var;

    fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant, &[])
    }

    fn param(&mut self, value: &Tensor<T>, trainable: bool) -> Var {
        let op = if trainable { Op::Param } else { Op::Constant };
        self.push(value.clone(), op, &[])
    }

    fn value<'a>(&'a self, node: &'a Var) -> &'a Tensor<T> {
        self.get(*node)
    }

    fn conv2d(&mut self, x: &Var, kernel: &Var, bias: &Var) -> Result<Var> {
        let value = ops::conv2d(self.get(*x), self.get(*kernel), self.get(*bias))?;
        Ok(self.push(
            value,
            Op::Conv2d {
                x: *x,
                kernel: *kernel,
                bias: *bias,
            },
            &[*x, *kernel, *bias],
        ))
    }

    fn relu(&mut self, x: &Var) -> Var {
        let value = ops::relu(self.get(*x));
        if self.track_kinks {
            let mask: Vec<i8> = self.get(*x).data().iter().map(|&v| (v > T::zero()) as i8).collect();
            self.mix_kinks(mask.into_iter());
        }
        self.push(value, Op::Relu(*x), &[*x])
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let value = self.get(*a).add(self.get(*b))?;
        Ok(self.push(value, Op::Add(*a, *b), &[*a, *b]))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let value = self.get(*a).sub(self.get(*b))?;
        Ok(self.push(value, Op::Sub(*a, *b), &[*a, *b]))
    }

    fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor<T>> = xs.iter().map(|v| self.get(*v)).collect();
        let value = ops::concat_channels(&refs)?;
        let widths = refs.iter().map(|t| t.nchw().map(|d| d.1)).collect::<Result<Vec<_>>>()?;
        Ok(self.push(
            value,
            Op::Concat {
                inputs: xs.to_vec(),
                widths,
            },
            xs,
        ))
    }

    fn pixel_shuffle(&mut self, x: &Var, r: usize) -> Result<Var> {
        let value = ops::pixel_shuffle(self.get(*x), r)?;
        Ok(self.push(value, Op::PixelShuffle { x: *x, r }, &[*x]))
    }

    fn stack(&mut self, xs: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor<T>> = xs.iter().map(|v| self.get(*v)).collect();
        let value = Tensor::stack(&refs)?;
        Ok(self.push(value, Op::Stack(xs.to_vec()), xs))
    }

    fn select(&mut self, x: &Var, index: usize) -> Result<Var> {
        let value = self.get(*x).select(index)?;
        Ok(self.push(value, Op::Select { x: *x, index }, &[*x]))
    }

    fn repeat(&mut self, x: &Var, n: usize) -> Result<Var> {
        if n == 0 {
            return Err(Error::invalid("repeat count must be positive"));
        }
        let src = self.get(*x);
        let refs = vec![src; n];
        let value = Tensor::stack(&refs)?;
        Ok(self.push(value, Op::Repeat { x: *x, n }, &[*x]))
    }

    fn gather(&mut self, x: &Var, indices: &[usize]) -> Result<Var> {
        let value = self.get(*x).gather(indices)?;
        Ok(self.push(
            value,
            Op::Gather {
                x: *x,
                indices: indices.to_vec(),
            },
            &[*x],
        ))
    }
}
