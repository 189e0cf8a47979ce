use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapt::AdaptFlags;
use crate::backbone::{check_scale, BackboneConfig};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Single-image pre-training of the backbone.
    Backbone,
    /// Frozen backbone, adaptation module trained.
    Adaptation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    Desk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub phase: Phase,
    pub scale: usize,
    /// LR patch side.
    pub patch: usize,
    pub batch: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub lr0: f32,
    pub lr_decay: f32,
    pub decay_every: usize,
    pub seed: u64,
    pub angular: usize,
    pub flags: AdaptFlags,
    /// Backbone architecture used when training it from scratch.
    pub backbone: BackboneConfig,
    /// `C_x`.
    pub sas_width: usize,
    pub augment: bool,
    /// Fraction of light fields held out for validation (taken from the end).
    pub val_fraction: f64,
}

impl TrainConfig {
    pub fn paper(phase: Phase) -> Self {
        TrainConfig {
            phase,
            scale: 2,
            patch: 32,
            batch: 4,
            epochs: 250,
            batches_per_epoch: 1000,
            lr0: 1e-4,
            lr_decay: 0.5,
            decay_every: 50,
            seed: 0,
            angular: 5,
            flags: AdaptFlags::default(),
            backbone: BackboneConfig {
                image_channels: 1,
                width: 64,
                blocks: 4,
                scale: 2,
            },
            sas_width: 32,
            augment: true,
            val_fraction: 0.1,
        }
    }

    /// CI-sized run: 2 epochs of 100 batches on 3x3 light fields, with narrow
    /// layers and a larger step size so it finishes in minutes on one core.
    pub fn desk(phase: Phase) -> Self {
        TrainConfig {
            epochs: 2,
            batches_per_epoch: 100,
            angular: 3,
            patch: 16,
            lr0: 1e-3,
            backbone: BackboneConfig {
                image_channels: 1,
                width: 16,
                blocks: 4,
                scale: 2,
            },
            sas_width: 8,
            ..Self::paper(phase)
        }
    }

    pub fn preset(preset: Preset, phase: Phase) -> Self {
        match preset {
            Preset::Paper => Self::paper(phase),
            Preset::Desk => Self::desk(phase),
        }
    }

    pub fn with_scale(mut self, scale: usize) -> Self {
        self.scale = scale;
        self.backbone.scale = scale;
        self
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.batches_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        check_scale(self.scale)?;
        if self.backbone.scale != self.scale {
            return Err(Error::invalid(format!(
                "backbone scale x{} differs from training scale x{}",
                self.backbone.scale, self.scale
            )));
        }
        self.backbone.validate()?;
        let positive = [
            ("patch", self.patch),
            ("batch", self.batch),
            ("batches_per_epoch", self.batches_per_epoch),
            ("decay_every", self.decay_every),
            ("angular", self.angular),
            ("sas_width", self.sas_width),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid(format!(
                "learning rate {} with decay {} is not usable",
                self.lr0, self.lr_decay
            )));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid("val_fraction must be in [0, 1)"));
        }
        Ok(())
    }

    /// Step size for a 0-based epoch: `lr0 * decay^(epoch / decay_every)`.
    pub fn lr_at(&self, epoch: usize) -> f32 {
        self.lr0 * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }

    pub fn lr_trace(&self) -> Vec<f32> {
        (0..self.epochs).map(|e| self.lr_at(e)).collect()
    }

    /// Hex SHA-256 of the JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json))
    }
}

/// Number of held-out light fields for a dataset of `count`.
pub fn val_count(count: usize, fraction: f64) -> usize {
    if count < 2 || fraction <= 0.0 {
        return 0;
    }
    ((count as f64 * fraction).round() as usize).clamp(1, count - 1)
}
