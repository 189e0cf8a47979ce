//! Desk-scale EDSR-style single-image SR network, split into a feature
//! extractor (`head -> body -> body_tail` plus a global skip) and an upscaler
//! (`conv -> pixel_shuffle` per x2 stage, then a tail conv).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{visit_block, visit_block_mut, visit_conv, visit_conv_mut};
use crate::nn::{conv, residual_block, ConvNodes, ConvParams, Eager, Graph, ParamSet, ResidualBlockParams, ResidualNodes};
use crate::nn::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Image channels (1 for Y-only).
    pub image_channels: usize,
    /// Feature width `C_i`.
    pub width: usize,
    /// Number of residual blocks in the body.
    pub blocks: usize,
    pub scale: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            image_channels: 1,
            width: 64,
            blocks: 4,
            scale: 2,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        check_scale(self.scale)?;
        if self.image_channels == 0 || self.width == 0 {
            return Err(Error::invalid("backbone channel counts must be positive"));
        }
        Ok(())
    }

    /// Number of x2 upsampling stages.
    pub fn stages(&self) -> usize {
        self.scale.trailing_zeros() as usize
    }
}

pub fn check_scale(scale: usize) -> Result<()> {
    match scale {
        2 | 4 => Ok(()),
        other => Err(Error::invalid(format!("unsupported scale x{other}; expected 2 or 4"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneParams<T = f32> {
    pub config: BackboneConfig,
    pub head: ConvParams<T>,
    pub body: Vec<ResidualBlockParams<T>>,
    pub body_tail: ConvParams<T>,
    /// One `C_i -> 4 C_i` conv per x2 stage.
    pub upsample: Vec<ConvParams<T>>,
    pub tail: ConvParams<T>,
    frozen: bool,
}

impl<T: Scalar> BackboneParams<T> {
    pub fn init(config: BackboneConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let BackboneConfig {
            image_channels: ci,
            width: w,
            ..
        } = config;
        Ok(BackboneParams {
            config,
            head: ConvParams::init(ci, w, 3, rng),
            body: (0..config.blocks).map(|_| ResidualBlockParams::init(w, rng)).collect(),
            body_tail: ConvParams::init(w, w, 3, rng),
            upsample: (0..config.stages()).map(|_| ConvParams::init(w, 4 * w, 3, rng)).collect(),
            tail: ConvParams::init(w, ci, 3, rng),
            frozen: false,
        })
    }

    pub fn zeros(config: BackboneConfig) -> Result<Self> {
        config.validate()?;
        let BackboneConfig {
            image_channels: ci,
            width: w,
            ..
        } = config;
        Ok(BackboneParams {
            config,
            head: ConvParams::zeros(ci, w, 3),
            body: (0..config.blocks).map(|_| ResidualBlockParams::zeros(w)).collect(),
            body_tail: ConvParams::zeros(w, w, 3),
            upsample: (0..config.stages()).map(|_| ConvParams::zeros(w, 4 * w, 3)).collect(),
            tail: ConvParams::zeros(w, ci, 3),
            frozen: false,
        })
    }

    /// Frozen parameters are bound as constants: backward reports no gradient
    /// for them and `adam_step` refuses to touch them.
    pub fn set_frozen(mut self, frozen: bool) -> Self {
        self.frozen = frozen;
        self
    }

    pub fn freeze(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    pub fn cast<U: Scalar>(&self) -> BackboneParams<U> {
        BackboneParams {
            config: self.config,
            head: self.head.cast(),
            body: self.body.iter().map(|b| b.cast()).collect(),
            body_tail: self.body_tail.cast(),
            upsample: self.upsample.iter().map(|c| c.cast()).collect(),
            tail: self.tail.cast(),
            frozen: self.frozen,
        }
    }

    pub fn bind<G: Graph<T>>(&self, g: &mut G) -> BackboneNodes<G::Node> {
        let trainable = !self.frozen;
        BackboneNodes {
            config: self.config,
            head: self.head.bind(g, trainable),
            body: self.body.iter().map(|b| b.bind(g, trainable)).collect(),
            body_tail: self.body_tail.bind(g, trainable),
            upsample: self.upsample.iter().map(|c| c.bind(g, trainable)).collect(),
            tail: self.tail.bind(g, trainable),
        }
    }

    /// Rebuilds the parameter set from tensors in [`ParamSet::named_tensors`] order.
    pub fn from_tensors(config: BackboneConfig, tensors: Vec<Tensor<T>>, frozen: bool) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        assign_all(&mut p, tensors)?;
        p.frozen = frozen;
        Ok(p)
    }
}

pub(crate) fn assign_all<T: Scalar, P: ParamSet<T>>(params: &mut P, tensors: Vec<Tensor<T>>) -> Result<()> {
    let names: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if names.len() != tensors.len() {
        return Err(Error::shape(
            "parameter set",
            format!("{} tensors", names.len()),
            format!("{} tensors", tensors.len()),
        ));
    }
    for ((name, shape), t) in names.iter().zip(&tensors) {
        if shape.as_slice() != t.shape() {
            return Err(Error::shape("parameter set", format!("{name} {shape:?}"), format!("{:?}", t.shape())));
        }
    }
    for (slot, t) in params.tensors_mut().into_iter().zip(tensors) {
        *slot = t;
    }
    Ok(())
}

impl<T: Scalar> ParamSet<T> for BackboneParams<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        visit_conv(&self.head, "head", &mut out);
        for (i, b) in self.body.iter().enumerate() {
            visit_block(b, &format!("body.{i}"), &mut out);
        }
        visit_conv(&self.body_tail, "body_tail", &mut out);
        for (i, c) in self.upsample.iter().enumerate() {
            visit_conv(c, &format!("upsample.{i}"), &mut out);
        }
        visit_conv(&self.tail, "tail", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        visit_conv_mut(&mut self.head, &mut out);
        for b in &mut self.body {
            visit_block_mut(b, &mut out);
        }
        visit_conv_mut(&mut self.body_tail, &mut out);
        for c in &mut self.upsample {
            visit_conv_mut(c, &mut out);
        }
        visit_conv_mut(&mut self.tail, &mut out);
        out
    }

    fn is_frozen(&self) -> bool {
        self.frozen
    }
}

#[derive(Clone, Debug)]
pub struct BackboneNodes<N> {
    pub config: BackboneConfig,
    pub head: ConvNodes<N>,
    pub body: Vec<ResidualNodes<N>>,
    pub body_tail: ConvNodes<N>,
    pub upsample: Vec<ConvNodes<N>>,
    pub tail: ConvNodes<N>,
}

impl<N: Clone> BackboneNodes<N> {
    /// Every node in [`ParamSet::named_tensors`] order.
    pub fn flatten(&self) -> Vec<N> {
        let mut out = vec![self.head.kernel.clone(), self.head.bias.clone()];
        for b in &self.body {
            out.extend(b.flatten());
        }
        out.extend([self.body_tail.kernel.clone(), self.body_tail.bias.clone()]);
        for c in &self.upsample {
            out.extend([c.kernel.clone(), c.bias.clone()]);
        }
        out.extend([self.tail.kernel.clone(), self.tail.bias.clone()]);
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn from_flat(config: BackboneConfig, nodes: &[N]) -> Result<Self> {
        let expected = 2 + 4 * config.blocks + 2 + 2 * config.stages() + 2;
        if nodes.len() != expected {
            return Err(Error::shape("BackboneNodes::from_flat", expected, nodes.len()));
        }
        let mut it = nodes.iter().cloned();
        let mut conv = || ConvNodes {
            kernel: it.next().expect("counted"),
            bias: it.next().expect("counted"),
        };
        let head = conv();
        let body = (0..config.blocks)
            .map(|_| ResidualNodes {
                conv1: conv(),
                conv2: conv(),
            })
            .collect();
        let body_tail = conv();
        let upsample = (0..config.stages()).map(|_| conv()).collect();
        let tail = conv();
        Ok(BackboneNodes {
            config,
            head,
            body,
            body_tail,
            upsample,
            tail,
        })
    }
}

/// `F_feat` on `[C_img, H, W]` or `[N, C_img, H, W]`.
pub fn features<T: Scalar, G: Graph<T>>(g: &mut G, p: &BackboneNodes<G::Node>, x: &G::Node) -> Result<G::Node> {
    let (_, c, _, _) = g.value(x).nchw()?;
    if c != p.config.image_channels {
        return Err(Error::shape(
            "extract_features",
            format!("{} image channels", p.config.image_channels),
            format!("{c} channels"),
        ));
    }
    let head = conv(g, x, &p.head)?;
    let mut h = head.clone();
    for block in &p.body {
        h = residual_block(g, &h, block)?;
    }
    let h = conv(g, &h, &p.body_tail)?;
    g.add(&head, &h)
}

/// `F_up` on `[C_i, H, W]` or `[N, C_i, H, W]`.
pub fn reconstruct<T: Scalar, G: Graph<T>>(g: &mut G, p: &BackboneNodes<G::Node>, feat: &G::Node) -> Result<G::Node> {
    let (_, c, _, _) = g.value(feat).nchw()?;
    if c != p.config.width {
        return Err(Error::shape(
            "upscale",
            format!("{} feature channels", p.config.width),
            format!("{c} channels"),
        ));
    }
    let mut h = feat.clone();
    for stage in &p.upsample {
        h = conv(g, &h, stage)?;
        h = g.pixel_shuffle(&h, 2)?;
    }
    conv(g, &h, &p.tail)
}

pub fn extract_features<T: Scalar>(img: &Tensor<T>, params: &BackboneParams<T>) -> Result<Tensor<T>> {
    let mut g = Eager;
    let nodes = params.bind(&mut g);
    let x = g.constant(img.clone());
    let out = features(&mut g, &nodes, &x)?;
    Ok(unwrap_arc(out))
}

pub fn upscale<T: Scalar>(feat: &Tensor<T>, params: &BackboneParams<T>, scale: usize) -> Result<Tensor<T>> {
    check_scale(scale)?;
    if scale != params.config.scale {
        return Err(Error::invalid(format!(
            "backbone was built for x{} but x{scale} was requested",
            params.config.scale
        )));
    }
    let mut g = Eager;
    let nodes = params.bind(&mut g);
    let x = g.constant(feat.clone());
    let out = reconstruct(&mut g, &nodes, &x)?;
    Ok(unwrap_arc(out))
}

/// `F_up(F_feat(x))`.
pub fn super_resolve_image<T: Scalar>(img: &Tensor<T>, params: &BackboneParams<T>) -> Result<Tensor<T>> {
    let mut g = Eager;
    let nodes = params.bind(&mut g);
    let x = g.constant(img.clone());
    let f = features(&mut g, &nodes, &x)?;
    let out = reconstruct(&mut g, &nodes, &f)?;
    Ok(unwrap_arc(out))
}

pub(crate) fn unwrap_arc<T: Clone>(a: std::sync::Arc<T>) -> T {
    std::sync::Arc::try_unwrap(a).unwrap_or_else(|a| (*a).clone())
}
