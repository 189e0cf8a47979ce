use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{adapt_batch, AdaptConfig, AdaptationParams};
use crate::backbone::{features, reconstruct, unwrap_arc, BackboneParams};
use crate::data::degrade::{degrade_pair, to_luma};
use crate::data::lightfield::{ColorSpace, LightField};
use crate::data::patch::{augment, sample_patch, Augmentation};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_lf, EvalOptions};
use crate::nn::{adam_step, checksum, ops, AdamConfig, AdamState, Eager, Graph, Tape, Tensor, Var};
use crate::pipeline::super_resolve_raw;
use crate::train::config::{val_count, TrainConfig};

/// One line of the JSONL training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f32,
    pub loss: f32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub psnr_val: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<P> {
    pub params: P,
    pub log: Vec<LogRecord>,
}

impl<P> TrainOutcome<P> {
    pub fn final_loss(&self) -> Option<f32> {
        self.log.last().map(|r| r.loss)
    }
}

/// A low/high resolution light-field pair in the network's channel layout.
#[derive(Clone, Debug)]
pub struct TrainPair {
    pub lr: LightField,
    pub hr: LightField,
}

/// `[rows, C, p, p]` inputs and `[rows, C, s p, s p]` targets; each light field
/// contributes `views` consecutive rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub lr: Tensor,
    pub hr: Tensor,
    pub views: usize,
}

/// Seeded generators for parameter init and for batch sampling.
pub fn rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut init = ChaCha8Rng::seed_from_u64(seed);
    init.set_stream(0);
    let mut data = ChaCha8Rng::seed_from_u64(seed);
    data.set_stream(1);
    (init, data)
}

/// Train/validation split: the last `val_fraction` of the light fields is held out.
pub fn split<T: Clone>(items: &[T], val_fraction: f64) -> (Vec<T>, Vec<T>) {
    let v = val_count(items.len(), val_fraction);
    let cut = items.len() - v;
    (items[..cut].to_vec(), items[cut..].to_vec())
}

/// Bicubic-degraded pairs, converted to luma when the network is single-channel.
pub fn prepare_pairs(dataset: &[LightField], scale: usize, channels: usize) -> Result<Vec<TrainPair>> {
    dataset
        .iter()
        .map(|lf| {
            let lf = match (channels, lf.color_space()) {
                (1, _) => to_luma(lf)?,
                (3, ColorSpace::Rgb) => lf.clone(),
                (c, cs) => {
                    return Err(Error::invalid(format!(
                        "cannot feed {cs:?} light fields to a {c}-channel network"
                    )))
                }
            };
            let (lr, hr) = degrade_pair(&lf, scale)?;
            Ok(TrainPair { lr, hr })
        })
        .collect()
}

fn stack_rows(parts: &[Tensor], rows_each: usize) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| Error::invalid("empty batch"))?;
    let inner = first.shape()[1..].to_vec();
    let mut data = Vec::with_capacity(first.len() * parts.len());
    for p in parts {
        data.extend_from_slice(p.data());
    }
    let mut shape = vec![rows_each * parts.len()];
    shape.extend(inner);
    Tensor::new(shape, data)
}

/// `cfg.batch` aligned light-field patches with joint augmentation.
pub fn sample_lf_batch(pairs: &[TrainPair], cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Batch> {
    if pairs.is_empty() {
        return Err(Error::invalid("no training light fields"));
    }
    let (mut lr, mut hr) = (Vec::new(), Vec::new());
    let n = pairs[0].lr.num_views();
    for _ in 0..cfg.batch {
        let pair = &pairs[rng.random_range(0..pairs.len())];
        let mut patch = sample_patch(&pair.lr, &pair.hr, cfg.patch, cfg.scale, rng)?;
        if cfg.augment {
            patch = augment(&patch, Augmentation::random(rng))?;
        }
        lr.push(patch.lr.stacked());
        hr.push(patch.hr.stacked());
    }
    Ok(Batch {
        lr: stack_rows(&lr, n)?,
        hr: stack_rows(&hr, n)?,
        views: n,
    })
}

/// `cfg.batch` single-view patches; every view of every light field is an independent image.
pub fn sample_view_batch(pairs: &[TrainPair], cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Batch> {
    if pairs.is_empty() {
        return Err(Error::invalid("no training light fields"));
    }
    let (mut lr, mut hr) = (Vec::new(), Vec::new());
    for _ in 0..cfg.batch {
        let pair = &pairs[rng.random_range(0..pairs.len())];
        let view = rng.random_range(0..pair.lr.num_views());
        let cs = pair.lr.color_space();
        let single = |lf: &LightField| LightField::from_views(1, &lf.views()[view..view + 1], cs);
        let mut patch = sample_patch(&single(&pair.lr)?, &single(&pair.hr)?, cfg.patch, cfg.scale, rng)?;
        if cfg.augment {
            patch = augment(&patch, Augmentation::random(rng))?;
        }
        lr.push(patch.lr.stacked());
        hr.push(patch.hr.stacked());
    }
    Ok(Batch {
        lr: stack_rows(&lr, 1)?,
        hr: stack_rows(&hr, 1)?,
        views: 1,
    })
}

/// Mean over held-out light fields of the per-view mean Y-PSNR.
pub fn validation_psnr(backbone: &BackboneParams, adapt: Option<&AdaptationParams>, pairs: &[TrainPair]) -> Result<f64> {
    let opts = EvalOptions::for_scale(backbone.config.scale);
    let scores = pairs
        .par_iter()
        .map(|p| {
            let sr = super_resolve_raw(backbone, adapt, &p.lr)?;
            Ok(evaluate_lf(&sr, &p.hr, &opts)?.mean_psnr)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len().max(1) as f64)
}

fn check_loss(loss: f32, step: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("training loss at step {step}")));
    }
    Ok(())
}

fn collect_grads(tape: &Tape, loss: Var, vars: &[Var]) -> Result<Vec<Tensor>> {
    let mut grads = tape.backward(loss)?;
    vars.iter()
        .map(|v| grads.take(*v).ok_or_else(|| Error::Autograd("missing gradient for a trainable parameter".into())))
        .collect()
}

type Sink<'a> = &'a mut dyn FnMut(&LogRecord) -> Result<()>;

fn ignore(_: &LogRecord) -> Result<()> {
    Ok(())
}

pub fn train_backbone(dataset: &[LightField], cfg: &TrainConfig) -> Result<TrainOutcome<BackboneParams>> {
    train_backbone_with(dataset, cfg, &mut ignore)
}

/// Phase 1: single-image training of a fresh backbone; `sink` sees every log record.
pub fn train_backbone_with(dataset: &[LightField], cfg: &TrainConfig, sink: Sink<'_>) -> Result<TrainOutcome<BackboneParams>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training needs at least one light field"));
    }
    let (train, val) = split(dataset, cfg.val_fraction);
    let train = prepare_pairs(&train, cfg.scale, cfg.backbone.image_channels)?;
    let val = prepare_pairs(&val, cfg.scale, cfg.backbone.image_channels)?;
    let (mut init_rng, mut rng) = rngs(cfg.seed);
    let mut params = BackboneParams::init(cfg.backbone, &mut init_rng)?;
    let mut adam = AdamState::new(&params, AdamConfig::default());
    let mut log = Vec::with_capacity(cfg.total_steps());
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        for b in 0..cfg.batches_per_epoch {
            let batch = sample_view_batch(&train, cfg, &mut rng)?;
            let mut tape = Tape::new();
            let nodes = params.bind(&mut tape);
            let x = tape.constant(batch.lr);
            let f = features(&mut tape, &nodes, &x)?;
            let y = reconstruct(&mut tape, &nodes, &f)?;
            let t = tape.constant(batch.hr);
            let loss = tape.l1_loss(y, t)?;
            let value = tape.get(loss).data()[0];
            check_loss(value, step)?;
            let grads = collect_grads(&tape, loss, &nodes.flatten())?;
            drop(tape);
            adam_step(&mut params, &grads, &mut adam, lr)?;
            let last = b + 1 == cfg.batches_per_epoch;
            let psnr_val = if last && !val.is_empty() { Some(validation_psnr(&params, None, &val)?) } else { None };
            let rec = LogRecord {
                step,
                epoch,
                lr,
                loss: value,
                psnr_val,
            };
            sink(&rec)?;
            log.push(rec);
            step += 1;
        }
    }
    Ok(TrainOutcome { params, log })
}

/// Frozen-backbone features of a batch.
pub fn backbone_features(backbone: &BackboneParams, lr: &Tensor) -> Result<Tensor> {
    let mut g = Eager;
    let nodes = backbone.bind(&mut g);
    let x = g.constant(lr.clone());
    Ok(unwrap_arc(features(&mut g, &nodes, &x)?))
}

/// Per-step objective: L1 summed over the views of a light field, averaged over the batch.
pub fn adaptation_loss(backbone: &BackboneParams, adapt: Option<&AdaptationParams>, batch: &Batch) -> Result<f32> {
    let feats = backbone_features(backbone, &batch.lr)?;
    let mut g = Eager;
    let bb = backbone.bind(&mut g);
    let f = g.constant(feats);
    let f = match adapt {
        Some(p) => {
            let nodes = p.bind(&mut g, false);
            adapt_batch(&mut g, &nodes, &f)?
        }
        None => f,
    };
    let y = reconstruct(&mut g, &bb, &f)?;
    Ok(ops::l1_loss(&y, &batch.hr)? * batch.views as f32)
}

/// A fresh adaptation module sized for `backbone` and `cfg`, drawn from the init stream of `cfg.seed`.
pub fn init_adaptation(backbone: &BackboneParams, cfg: &TrainConfig) -> Result<AdaptationParams> {
    let (mut init_rng, _) = rngs(cfg.seed);
    AdaptationParams::init(
        AdaptConfig::new(cfg.angular, backbone.config.width, cfg.sas_width, cfg.flags),
        &mut init_rng,
    )
}

pub fn train_adaptation(dataset: &[LightField], backbone: &BackboneParams, cfg: &TrainConfig) -> Result<TrainOutcome<AdaptationParams>> {
    train_adaptation_with(dataset, backbone, cfg, &mut ignore)
}

/// Phase 2: trains only the adaptation module on top of a frozen backbone.
pub fn train_adaptation_with(
    dataset: &[LightField],
    backbone: &BackboneParams,
    cfg: &TrainConfig,
    sink: Sink<'_>,
) -> Result<TrainOutcome<AdaptationParams>> {
    cfg.validate()?;
    if !backbone.frozen() {
        return Err(Error::Protocol("adaptation training requires a frozen backbone".into()));
    }
    if backbone.config.scale != cfg.scale {
        return Err(Error::invalid(format!(
            "backbone upscales x{} but the run is configured for x{}",
            backbone.config.scale, cfg.scale
        )));
    }
    if dataset.is_empty() {
        return Err(Error::invalid("training needs at least one light field"));
    }
    if let Some(lf) = dataset.iter().find(|lf| lf.angular() != cfg.angular) {
        return Err(Error::invalid(format!(
            "dataset has {0}x{0} light fields but the run is configured for {1}x{1}",
            lf.angular(),
            cfg.angular
        )));
    }
    let before = checksum(backbone);
    let (train, val) = split(dataset, cfg.val_fraction);
    let train = prepare_pairs(&train, cfg.scale, backbone.config.image_channels)?;
    let val = prepare_pairs(&val, cfg.scale, backbone.config.image_channels)?;
    let (_, mut rng) = rngs(cfg.seed);
    let mut params = init_adaptation(backbone, cfg)?;
    let mut adam = AdamState::new(&params, AdamConfig::default());
    let mut log = Vec::with_capacity(cfg.total_steps());
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        for b in 0..cfg.batches_per_epoch {
            let batch = sample_lf_batch(&train, cfg, &mut rng)?;
            let feats = backbone_features(backbone, &batch.lr)?;
            let mut tape = Tape::new();
            let bb = backbone.bind(&mut tape);
            let nodes = params.bind(&mut tape, true);
            let f = tape.constant(feats);
            let z = adapt_batch(&mut tape, &nodes, &f)?;
            let y = reconstruct(&mut tape, &bb, &z)?;
            let t = tape.constant(batch.hr);
            let mean = tape.l1_loss(y, t)?;
            let loss = tape.scale(mean, batch.views as f32);
            let value = tape.get(loss).data()[0];
            check_loss(value, step)?;
            let grads = collect_grads(&tape, loss, &nodes.flatten())?;
            drop(tape);
            adam_step(&mut params, &grads, &mut adam, lr)?;
            let last = b + 1 == cfg.batches_per_epoch;
            let psnr_val = if last && !val.is_empty() {
                Some(validation_psnr(backbone, Some(&params), &val)?)
            } else {
                None
            };
            let rec = LogRecord {
                step,
                epoch,
                lr,
                loss: value,
                psnr_val,
            };
            sink(&rec)?;
            log.push(rec);
            step += 1;
        }
    }
    if checksum(backbone) != before {
        return Err(Error::Protocol("backbone weights changed during adaptation training".into()));
    }
    Ok(TrainOutcome { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::BackboneConfig;
    use crate::data::synth::synth_dataset;
    use crate::train::config::Phase;

    fn tiny(phase: Phase) -> TrainConfig {
        let mut c = TrainConfig::desk(phase);
        c.backbone = BackboneConfig {
            image_channels: 1,
            width: 4,
            blocks: 1,
            scale: 2,
        };
        c.sas_width = 2;
        c.patch = 6;
        c.batch = 2;
        c.epochs = 1;
        c.batches_per_epoch = 3;
        c
    }

    fn data() -> Vec<LightField> {
        synth_dataset(3, 3, 1.0, 24, 7).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initial_backbone() {
        let mut cfg = tiny(Phase::Backbone);
        cfg.epochs = 0;
        let out = train_backbone(&data(), &cfg).unwrap();
        let (mut init, _) = rngs(cfg.seed);
        assert_eq!(out.params, BackboneParams::init(cfg.backbone, &mut init).unwrap());
        assert!(out.log.is_empty());
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(train_backbone(&[], &tiny(Phase::Backbone)).is_err());
    }

    #[test]
    fn unfrozen_backbone_is_a_protocol_error() {
        let cfg = tiny(Phase::Adaptation);
        let bb = BackboneParams::init(cfg.backbone, &mut rngs(0).0).unwrap();
        let err = train_adaptation(&data(), &bb, &cfg).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");
    }

    #[test]
    fn angular_mismatch_rejected() {
        let mut cfg = tiny(Phase::Adaptation);
        cfg.angular = 5;
        let bb = BackboneParams::init(cfg.backbone, &mut rngs(0).0).unwrap().set_frozen(true);
        assert!(train_adaptation(&data(), &bb, &cfg).is_err());
    }

    #[test]
    fn first_logged_loss_is_the_backbone_loss() {
        let cfg = tiny(Phase::Adaptation);
        let bb = BackboneParams::init(cfg.backbone, &mut rngs(3).0).unwrap().set_frozen(true);
        let ds = data();
        let out = train_adaptation(&ds, &bb, &cfg).unwrap();
        let (train, _) = split(&ds, cfg.val_fraction);
        let pairs = prepare_pairs(&train, cfg.scale, 1).unwrap();
        let batch = sample_lf_batch(&pairs, &cfg, &mut rngs(cfg.seed).1).unwrap();
        assert_eq!(out.log[0].loss, adaptation_loss(&bb, None, &batch).unwrap());
        assert_eq!(out.log.len(), 3);
        assert!(out.log[2].psnr_val.is_some());
    }

    #[test]
    fn batch_layout() {
        let cfg = tiny(Phase::Adaptation);
        let pairs = prepare_pairs(&data(), 2, 1).unwrap();
        let b = sample_lf_batch(&pairs, &cfg, &mut rngs(1).1).unwrap();
        assert_eq!(b.lr.shape(), &[18, 1, 6, 6]);
        assert_eq!(b.hr.shape(), &[18, 1, 12, 12]);
        let v = sample_view_batch(&pairs, &cfg, &mut rngs(1).1).unwrap();
        assert_eq!(v.lr.shape(), &[2, 1, 6, 6]);
    }
}
