use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::graph::Graph;
use crate::nn::ops::check_conv_params;
use crate::nn::tensor::{Scalar, Tensor};

/// Kernel `[C_out, C_in, k, k]` (odd `k`) and bias `[C_out]` of a same-padded convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T = f32> {
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(kernel: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let c_in = match kernel.shape() {
            [_, c_in, _, _] => *c_in,
            other => {
                return Err(Error::shape(
                    "ConvParams",
                    "[C_out, C_in, k, k]",
                    format!("{other:?}"),
                ))
            }
        };
        check_conv_params(&kernel, &bias, c_in)?;
        Ok(ConvParams { kernel, bias })
    }

    pub fn zeros(c_in: usize, c_out: usize, k: usize) -> Self {
        ConvParams {
            kernel: Tensor::zeros(vec![c_out, c_in, k, k]),
            bias: Tensor::zeros(vec![c_out]),
        }
    }

    /// Fan-in uniform init: weights and bias in `±sqrt(1 / (C_in * k * k))`.
    pub fn init(c_in: usize, c_out: usize, k: usize, rng: &mut impl Rng) -> Self {
        assert!(k % 2 == 1, "kernel size must be odd");
        let bound = (1.0 / (c_in * k * k) as f64).sqrt();
        ConvParams {
            kernel: Tensor::uniform(vec![c_out, c_in, k, k], -bound, bound, rng),
            bias: Tensor::uniform(vec![c_out], -bound, bound, rng),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn cast<U: Scalar>(&self) -> ConvParams<U> {
        ConvParams {
            kernel: self.kernel.cast(),
            bias: self.bias.cast(),
        }
    }

    pub fn bind<G: Graph<T>>(&self, g: &mut G, trainable: bool) -> ConvNodes<G::Node> {
        ConvNodes {
            kernel: g.param(&self.kernel, trainable),
            bias: g.param(&self.bias, trainable),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((format!("{prefix}.kernel"), &self.kernel));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<T>>) {
        out.push(&mut self.kernel);
        out.push(&mut self.bias);
    }
}

/// Graph handles for one convolution's parameters.
#[derive(Clone, Debug)]
pub struct ConvNodes<N> {
    pub kernel: N,
    pub bias: N,
}

pub fn conv<T: Scalar, G: Graph<T>>(g: &mut G, x: &G::Node, p: &ConvNodes<G::Node>) -> Result<G::Node> {
    g.conv2d(x, &p.kernel, &p.bias)
}

/// Two `C -> C` 3x3 convolutions with a ReLU between and an identity skip.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlockParams<T = f32> {
    pub conv1: ConvParams<T>,
    pub conv2: ConvParams<T>,
}

impl<T: Scalar> ResidualBlockParams<T> {
    pub fn new(conv1: ConvParams<T>, conv2: ConvParams<T>) -> Result<Self> {
        let c = conv1.in_channels();
        for (name, p) in [("conv1", &conv1), ("conv2", &conv2)] {
            if p.in_channels() != c || p.out_channels() != c || p.kernel_size() != 3 {
                return Err(Error::shape(
                    "residual_block",
                    format!("{name} {c}->{c} 3x3"),
                    format!(
                        "{name} {}->{} {k}x{k}",
                        p.in_channels(),
                        p.out_channels(),
                        k = p.kernel_size()
                    ),
                ));
            }
        }
        Ok(ResidualBlockParams { conv1, conv2 })
    }

    pub fn init(channels: usize, rng: &mut impl Rng) -> Self {
        ResidualBlockParams {
            conv1: ConvParams::init(channels, channels, 3, rng),
            conv2: ConvParams::init(channels, channels, 3, rng),
        }
    }

    pub fn zeros(channels: usize) -> Self {
        ResidualBlockParams {
            conv1: ConvParams::zeros(channels, channels, 3),
            conv2: ConvParams::zeros(channels, channels, 3),
        }
    }

    pub fn width(&self) -> usize {
        self.conv1.in_channels()
    }

    pub fn cast<U: Scalar>(&self) -> ResidualBlockParams<U> {
        ResidualBlockParams {
            conv1: self.conv1.cast(),
            conv2: self.conv2.cast(),
        }
    }

    pub fn bind<G: Graph<T>>(&self, g: &mut G, trainable: bool) -> ResidualNodes<G::Node> {
        ResidualNodes {
            conv1: self.conv1.bind(g, trainable),
            conv2: self.conv2.bind(g, trainable),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.conv1.visit(&format!("{prefix}.conv1"), out);
        self.conv2.visit(&format!("{prefix}.conv2"), out);
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<T>>) {
        self.conv1.visit_mut(out);
        self.conv2.visit_mut(out);
    }
}

#[derive(Clone, Debug)]
pub struct ResidualNodes<N> {
    pub conv1: ConvNodes<N>,
    pub conv2: ConvNodes<N>,
}

impl<N: Clone> ResidualNodes<N> {
    pub fn flatten(&self) -> [N; 4] {
        [
            self.conv1.kernel.clone(),
            self.conv1.bias.clone(),
            self.conv2.kernel.clone(),
            self.conv2.bias.clone(),
        ]
    }
}

/// `x + conv2(relu(conv1(x)))`.
pub fn residual_block<T: Scalar, G: Graph<T>>(
    g: &mut G,
    x: &G::Node,
    p: &ResidualNodes<G::Node>,
) -> Result<G::Node> {
    let h = conv(g, x, &p.conv1)?;
    let h = g.relu(&h);
    let h = conv(g, &h, &p.conv2)?;
    g.add(x, &h)
}

/// Named, ordered access to every tensor of a parameter set.
///
/// The order is stable and is the order used by checkpoints and optimizers.
pub trait ParamSet<T: Scalar = f32> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)>;

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn is_frozen(&self) -> bool {
        false
    }

    fn num_values(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

pub(crate) fn visit_conv<'a, T: Scalar>(p: &'a ConvParams<T>, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
    p.visit(prefix, out)
}

pub(crate) fn visit_conv_mut<'a, T: Scalar>(p: &'a mut ConvParams<T>, out: &mut Vec<&'a mut Tensor<T>>) {
    p.visit_mut(out)
}

pub(crate) fn visit_block<'a, T: Scalar>(
    p: &'a ResidualBlockParams<T>,
    prefix: &str,
    out: &mut Vec<(String, &'a Tensor<T>)>,
) {
    p.visit(prefix, out)
}

pub(crate) fn visit_block_mut<'a, T: Scalar>(p: &'a mut ResidualBlockParams<T>, out: &mut Vec<&'a mut Tensor<T>>) {
    p.visit_mut(out)
}

/// Hex SHA-256 over names, shapes and little-endian values of a parameter set.
pub fn checksum<T: Scalar, P: ParamSet<T> + ?Sized>(params: &P) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for (name, t) in params.named_tensors() {
        hasher.update(name.as_bytes());
        for d in t.shape() {
            hasher.update((*d as u64).to_le_bytes());
        }
        for v in t.data() {
            hasher.update(v.as_f64().to_le_bytes());
        }
    }
    format!("{:x}", hasher.finalize())
}
