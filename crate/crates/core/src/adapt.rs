//! Sub-aperture feature adaptation.
//!
//! For every target view `i` and source view `j`, a per-source block `SAS_j`
//! maps `[f_j, f_i - f_j]` to a `C_x`-channel shifted feature. The `n` shifted
//! features of a target are concatenated in flat view order, blended by a 1x1
//! conv back to `C_i` channels, processed by a 3x3 conv and added to `f_i`:
//!
//! ```text
//! f_i^j = SAS_j([f_j, f_i - f_j])
//! f_i'  = f_i + F_s([f_i^0, ..., f_i^(n-1)])
//! ```
//!
//! `SAS_j` weights depend only on the source view, so the same block serves
//! every target. The fusion process conv starts at zero, which makes the
//! whole module an exact identity at initialization.
//!
//! The batched path below evaluates `SAS_j` once per source view on a stack of
//! every (light field, target) pair, so a batch costs `n` block evaluations of
//! `B * n` images each instead of `B * n^2` separate ones.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{assign_all, unwrap_arc};
use crate::data::lightfield::SaiIndex;
use crate::error::{Error, Result};
use crate::nn::layers::{visit_block, visit_block_mut, visit_conv, visit_conv_mut};
use crate::nn::{conv, residual_block, ConvNodes, ConvParams, Eager, Graph, ParamSet, ResidualBlockParams, ResidualNodes};
use crate::nn::{Scalar, Tensor};

/// Residual blocks per SAS module.
pub const SAS_BLOCKS: usize = 3;

/// Ablation switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptFlags {
    /// Feed `f_i - f_j` next to `f_j`; otherwise SAS sees `f_j` alone.
    pub use_difference: bool,
    /// Add `f_i` to the fusion output.
    pub use_residual: bool,
}

impl Default for AdaptFlags {
    fn default() -> Self {
        AdaptFlags {
            use_difference: true,
            use_residual: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub angular: usize,
    /// `C_i`, the backbone feature width.
    pub feat_width: usize,
    /// `C_x`, the width inside each SAS module.
    pub sas_width: usize,
    pub flags: AdaptFlags,
}

impl AdaptConfig {
    pub fn new(angular: usize, feat_width: usize, sas_width: usize, flags: AdaptFlags) -> Self {
        AdaptConfig {
            angular,
            feat_width,
            sas_width,
            flags,
        }
    }

    pub fn views(&self) -> usize {
        self.angular * self.angular
    }

    pub fn entry_width(&self) -> usize {
        if self.flags.use_difference {
            2 * self.feat_width
        } else {
            self.feat_width
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.angular == 0 || self.feat_width == 0 || self.sas_width == 0 {
            return Err(Error::invalid(format!(
                "adaptation needs positive angular resolution and widths, got a={} C_i={} C_x={}",
                self.angular, self.feat_width, self.sas_width
            )));
        }
        Ok(())
    }
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig::new(5, 64, 32, AdaptFlags::default())
    }
}

/// Entry conv (`C_entry -> C_x`, 3x3) followed by residual blocks at `C_x`.
#[derive(Clone, Debug, PartialEq)]
pub struct SasParams<T = f32> {
    pub entry: ConvParams<T>,
    pub blocks: Vec<ResidualBlockParams<T>>,
}

/// 1x1 blend (`n C_x -> C_i`) then a 3x3 process conv (`C_i -> C_i`).
#[derive(Clone, Debug, PartialEq)]
pub struct FusionParams<T = f32> {
    pub blend: ConvParams<T>,
    pub process: ConvParams<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationParams<T = f32> {
    pub config: AdaptConfig,
    /// Indexed by source view `j = u * a + v`.
    pub sas: Vec<SasParams<T>>,
    pub fusion: FusionParams<T>,
}

impl<T: Scalar> SasParams<T> {
    pub fn init(entry_width: usize, width: usize, rng: &mut impl Rng) -> Self {
        SasParams {
            entry: ConvParams::init(entry_width, width, 3, rng),
            blocks: (0..SAS_BLOCKS).map(|_| ResidualBlockParams::init(width, rng)).collect(),
        }
    }

    pub fn zeros(entry_width: usize, width: usize) -> Self {
        SasParams {
            entry: ConvParams::zeros(entry_width, width, 3),
            blocks: (0..SAS_BLOCKS).map(|_| ResidualBlockParams::zeros(width)).collect(),
        }
    }

    fn bind<G: Graph<T>>(&self, g: &mut G, trainable: bool) -> SasNodes<G::Node> {
        SasNodes {
            entry: self.entry.bind(g, trainable),
            blocks: self.blocks.iter().map(|b| b.bind(g, trainable)).collect(),
        }
    }

    fn cast<U: Scalar>(&self) -> SasParams<U> {
        SasParams {
            entry: self.entry.cast(),
            blocks: self.blocks.iter().map(|b| b.cast()).collect(),
        }
    }
}

impl<T: Scalar> AdaptationParams<T> {
    /// Random SAS modules and blend; zero process conv, so the module starts as the identity.
    pub fn init(config: AdaptConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (n, ci, cx) = (config.views(), config.feat_width, config.sas_width);
        let sas = (0..n).map(|_| SasParams::init(config.entry_width(), cx, rng)).collect();
        let fusion = FusionParams {
            blend: ConvParams::init(n * cx, ci, 1, rng),
            process: ConvParams::zeros(ci, ci, 3),
        };
        Ok(AdaptationParams { config, sas, fusion })
    }

    pub fn zeros(config: AdaptConfig) -> Result<Self> {
        config.validate()?;
        let (n, ci, cx) = (config.views(), config.feat_width, config.sas_width);
        Ok(AdaptationParams {
            config,
            sas: (0..n).map(|_| SasParams::zeros(config.entry_width(), cx)).collect(),
            fusion: FusionParams {
                blend: ConvParams::zeros(n * cx, ci, 1),
                process: ConvParams::zeros(ci, ci, 3),
            },
        })
    }

    pub fn from_tensors(config: AdaptConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        assign_all(&mut p, tensors)?;
        Ok(p)
    }

    pub fn cast<U: Scalar>(&self) -> AdaptationParams<U> {
        AdaptationParams {
            config: self.config,
            sas: self.sas.iter().map(|s| s.cast()).collect(),
            fusion: FusionParams {
                blend: self.fusion.blend.cast(),
                process: self.fusion.process.cast(),
            },
        }
    }

    pub fn bind<G: Graph<T>>(&self, g: &mut G, trainable: bool) -> AdaptNodes<G::Node> {
        AdaptNodes {
            config: self.config,
            sas: self.sas.iter().map(|s| s.bind(g, trainable)).collect(),
            fusion: FusionNodes {
                blend: self.fusion.blend.bind(g, trainable),
                process: self.fusion.process.bind(g, trainable),
            },
        }
    }
}

impl<T: Scalar> ParamSet<T> for AdaptationParams<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (j, s) in self.sas.iter().enumerate() {
            visit_conv(&s.entry, &format!("sas.{j}.entry"), &mut out);
            for (k, b) in s.blocks.iter().enumerate() {
                visit_block(b, &format!("sas.{j}.blocks.{k}"), &mut out);
            }
        }
        visit_conv(&self.fusion.blend, "fusion.blend", &mut out);
        visit_conv(&self.fusion.process, "fusion.process", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for s in &mut self.sas {
            visit_conv_mut(&mut s.entry, &mut out);
            for b in &mut s.blocks {
                visit_block_mut(b, &mut out);
            }
        }
        visit_conv_mut(&mut self.fusion.blend, &mut out);
        visit_conv_mut(&mut self.fusion.process, &mut out);
        out
    }
}

#[derive(Clone, Debug)]
pub struct SasNodes<N> {
    pub entry: ConvNodes<N>,
    pub blocks: Vec<ResidualNodes<N>>,
}

#[derive(Clone, Debug)]
pub struct FusionNodes<N> {
    pub blend: ConvNodes<N>,
    pub process: ConvNodes<N>,
}

#[derive(Clone, Debug)]
pub struct AdaptNodes<N> {
    pub config: AdaptConfig,
    pub sas: Vec<SasNodes<N>>,
    pub fusion: FusionNodes<N>,
}

impl<N: Clone> AdaptNodes<N> {
    /// Every node in [`ParamSet::named_tensors`] order.
    pub fn flatten(&self) -> Vec<N> {
        let mut out = Vec::new();
        for s in &self.sas {
            out.extend([s.entry.kernel.clone(), s.entry.bias.clone()]);
            for b in &s.blocks {
                out.extend(b.flatten());
            }
        }
        for c in [&self.fusion.blend, &self.fusion.process] {
            out.extend([c.kernel.clone(), c.bias.clone()]);
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn from_flat(config: AdaptConfig, nodes: &[N]) -> Result<Self> {
        let expected = config.views() * (2 + 4 * SAS_BLOCKS) + 4;
        if nodes.len() != expected {
            return Err(Error::shape("AdaptNodes::from_flat", expected, nodes.len()));
        }
        let mut it = nodes.iter().cloned();
        let mut conv = || ConvNodes {
            kernel: it.next().expect("counted"),
            bias: it.next().expect("counted"),
        };
        let sas = (0..config.views())
            .map(|_| SasNodes {
                entry: conv(),
                blocks: (0..SAS_BLOCKS)
                    .map(|_| ResidualNodes {
                        conv1: conv(),
                        conv2: conv(),
                    })
                    .collect(),
            })
            .collect();
        let fusion = FusionNodes {
            blend: conv(),
            process: conv(),
        };
        Ok(AdaptNodes { config, sas, fusion })
    }
}

fn sas_body<T: Scalar, G: Graph<T>>(g: &mut G, p: &SasNodes<G::Node>, input: &G::Node) -> Result<G::Node> {
    let mut h = conv(g, input, &p.entry)?;
    for b in &p.blocks {
        h = residual_block(g, &h, b)?;
    }
    Ok(h)
}

/// `SAS_j` on `f_j` (and `f_i - f_j` when the difference feature is enabled).
pub fn sas_apply<T: Scalar, G: Graph<T>>(
    g: &mut G,
    p: &SasNodes<G::Node>,
    f_j: &G::Node,
    f_i: Option<&G::Node>,
) -> Result<G::Node> {
    let input = match f_i {
        Some(f_i) => {
            let diff = g.sub(f_i, f_j)?;
            g.concat_channels(&[f_j.clone(), diff])?
        }
        None => f_j.clone(),
    };
    sas_body(g, p, &input)
}

/// `F_s` on the concatenated shifted features, plus `f_i` when `residual` is set.
pub fn fusion_apply<T: Scalar, G: Graph<T>>(
    g: &mut G,
    p: &FusionNodes<G::Node>,
    f_i: &G::Node,
    shifted: &[G::Node],
    residual: bool,
) -> Result<G::Node> {
    let cat = g.concat_channels(shifted)?;
    let h = conv(g, &cat, &p.blend)?;
    let h = conv(g, &h, &p.process)?;
    if residual {
        g.add(f_i, &h)
    } else {
        Ok(h)
    }
}

/// Adapts a batch of light fields at once.
///
/// `feats` is `[B * n, C_i, H, W]` with the views of each light field
/// contiguous in flat order; the output has the same layout.
pub fn adapt_batch<T: Scalar, G: Graph<T>>(g: &mut G, p: &AdaptNodes<G::Node>, feats: &G::Node) -> Result<G::Node> {
    let cfg = p.config;
    let n = cfg.views();
    let shape = g.value(feats).shape().to_vec();
    let (rows, c) = match shape.as_slice() {
        [rows, c, _, _] => (*rows, *c),
        _ => return Err(Error::shape("adapt", "[B * n, C_i, H, W]", format!("{shape:?}"))),
    };
    if c != cfg.feat_width || rows == 0 || rows % n != 0 {
        return Err(Error::shape(
            "adapt",
            format!("a multiple of {n} views with {} channels", cfg.feat_width),
            format!("{rows} views with {c} channels"),
        ));
    }
    if p.sas.len() != n {
        return Err(Error::shape("adapt", format!("{n} SAS modules"), format!("{}", p.sas.len())));
    }
    let batch = rows / n;

    let mut shifted = Vec::with_capacity(n);
    for (j, sas) in p.sas.iter().enumerate() {
        let s = if cfg.flags.use_difference {
            // Row (b, i) of `src` holds f_{b,j}; SAS_j then sees [f_j, f_i - f_j] for every target i.
            let idx: Vec<usize> = (0..batch).flat_map(|b| std::iter::repeat(b * n + j).take(n)).collect();
            let src = g.gather(feats, &idx)?;
            sas_apply(g, sas, &src, Some(feats))?
        } else {
            // Without the difference the output does not depend on i: evaluate once per light field.
            let idx: Vec<usize> = (0..batch).map(|b| b * n + j).collect();
            let src = g.gather(feats, &idx)?;
            let once = sas_apply(g, sas, &src, None)?;
            let spread: Vec<usize> = (0..batch).flat_map(|b| std::iter::repeat(b).take(n)).collect();
            g.gather(&once, &spread)?
        };
        shifted.push(s);
    }
    fusion_apply(g, &p.fusion, feats, &shifted, cfg.flags.use_residual)
}

fn check_view(j: SaiIndex, a: usize) -> Result<()> {
    if j.u >= a || j.v >= a {
        return Err(Error::invalid(format!("view ({}, {}) outside a {a}x{a} grid", j.u, j.v)));
    }
    Ok(())
}

/// `SAS_j` for one (target, source) pair of `[C_i, H, W]` features.
pub fn sas_forward<T: Scalar>(j: SaiIndex, f_j: &Tensor<T>, f_i: &Tensor<T>, params: &AdaptationParams<T>) -> Result<Tensor<T>> {
    check_view(j, params.config.angular)?;
    if f_i.shape() != f_j.shape() {
        return Err(Error::shape("sas_forward", format!("{:?}", f_j.shape()), format!("{:?}", f_i.shape())));
    }
    let mut g = Eager;
    let nodes = params.sas[j.flat(params.config.angular)].bind(&mut g, false);
    let fj = g.constant(f_j.clone());
    let fi = g.constant(f_i.clone());
    let target = params.config.flags.use_difference.then_some(&fi);
    Ok(unwrap_arc(sas_apply(&mut g, &nodes, &fj, target)?))
}

/// Fusion of one target's `n` shifted features.
pub fn fuse<T: Scalar>(f_i: &Tensor<T>, shifted: &[Tensor<T>], params: &AdaptationParams<T>) -> Result<Tensor<T>> {
    let n = params.config.views();
    if shifted.len() != n {
        return Err(Error::shape("fuse", format!("{n} shifted features"), format!("{}", shifted.len())));
    }
    let mut g = Eager;
    let nodes = FusionNodes {
        blend: params.fusion.blend.bind(&mut g, false),
        process: params.fusion.process.bind(&mut g, false),
    };
    let fi = g.constant(f_i.clone());
    let parts: Vec<_> = shifted.iter().map(|t| g.constant(t.clone())).collect();
    Ok(unwrap_arc(fusion_apply(&mut g, &nodes, &fi, &parts, params.config.flags.use_residual)?))
}

/// `f_i'` for every view of one light field, in input order.
pub fn adapt_all_views<T: Scalar>(features: &[Tensor<T>], params: &AdaptationParams<T>) -> Result<Vec<Tensor<T>>> {
    let n = params.config.views();
    if features.len() != n {
        return Err(Error::shape("adapt_all_views", format!("{n} feature maps"), format!("{}", features.len())));
    }
    let refs: Vec<&Tensor<T>> = features.iter().collect();
    let stacked = Tensor::stack(&refs)?;
    let mut g = Eager;
    let nodes = params.bind(&mut g, false);
    let x = g.constant(stacked);
    adapt_batch(&mut g, &nodes, &x)?.unstack()
}
