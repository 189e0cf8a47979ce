//! Desk-scale ablation matrix on synthetic parallax light fields.
//!
//! One backbone is trained on single views and frozen. Each row then trains
//! (or skips) an adaptation module and is scored on the central 3x3 views of
//! held-out 5x5 light fields, so rows at different angular resolutions are
//! compared on the same pixels.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptFlags, AdaptationParams};
use crate::backbone::BackboneParams;
use crate::data::synth::synth_dataset;
use crate::error::{Error, Result};
use crate::metrics::{comparison_table, evaluate_lf, mean_over_scenes, EvalOptions};
use crate::pipeline::super_resolve_raw;
use crate::train::{prepare_pairs, train_adaptation, train_backbone, Phase, TrainConfig, TrainPair};

/// Angular resolution every row is scored on.
pub const EVAL_ANGULAR: usize = 3;
/// Angular resolution of the synthetic light fields.
pub const SOURCE_ANGULAR: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AblationRow {
    pub name: &'static str,
    pub angular: usize,
    /// `None` runs the backbone alone.
    pub flags: Option<AdaptFlags>,
}

/// The five rows, in table order.
pub fn ablation_rows() -> [AblationRow; 5] {
    let full = AdaptFlags::default();
    [
        AblationRow {
            name: "no-module",
            angular: 1,
            flags: None,
        },
        AblationRow {
            name: "no-diff",
            angular: 3,
            flags: Some(AdaptFlags {
                use_difference: false,
                ..full
            }),
        },
        AblationRow {
            name: "no-residual",
            angular: 3,
            flags: Some(AdaptFlags {
                use_residual: false,
                ..full
            }),
        },
        AblationRow {
            name: "full@3x3",
            angular: 3,
            flags: Some(full),
        },
        AblationRow {
            name: "full@5x5",
            angular: 5,
            flags: Some(full),
        },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub train_count: usize,
    pub test_count: usize,
    /// HR view side in pixels.
    pub size: usize,
    /// Disparity between neighbouring views, HR pixels.
    pub disparity: f32,
    pub data_seed: u64,
    pub test_seed: u64,
    pub backbone: TrainConfig,
    /// Phase-2 settings shared by every row; `angular` and `flags` are set per row.
    pub adapt: TrainConfig,
}

impl AblationConfig {
    /// 2000 backbone steps, then 300 adaptation steps per row.
    pub fn desk() -> Self {
        AblationConfig {
            train_count: 12,
            test_count: 4,
            size: 64,
            disparity: 1.0,
            data_seed: 1,
            test_seed: 99,
            backbone: TrainConfig {
                batches_per_epoch: 1000,
                ..TrainConfig::desk(Phase::Backbone)
            },
            adapt: TrainConfig {
                epochs: 3,
                ..TrainConfig::desk(Phase::Adaptation)
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_count == 0 || self.test_count == 0 {
            return Err(Error::invalid("ablation needs at least one training and one test light field"));
        }
        if self.backbone.phase != Phase::Backbone || self.adapt.phase != Phase::Adaptation {
            return Err(Error::invalid("ablation configs must be a backbone phase and an adaptation phase"));
        }
        if self.backbone.scale != self.adapt.scale {
            return Err(Error::invalid("backbone and adaptation scales differ"));
        }
        self.backbone.validate()?;
        self.adapt.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub name: String,
    pub angular: usize,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub final_loss: Option<f32>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub scale: usize,
    pub eval_angular: usize,
    pub backbone_seconds: f64,
    pub rows: Vec<AblationResult>,
}

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&AblationResult> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_table(&self) -> String {
        let rows: Vec<_> = self
            .rows
            .iter()
            .map(|r| (r.name.clone(), self.scale, r.mean_psnr, r.mean_ssim))
            .collect();
        comparison_table(&rows)
    }
}

fn score(backbone: &BackboneParams, adapt: Option<&AdaptationParams>, angular: usize, test: &[TrainPair]) -> Result<(f64, f64)> {
    let opts = EvalOptions::for_scale(backbone.config.scale);
    let reports = test
        .iter()
        .map(|p| {
            let sr = match angular {
                1 => super_resolve_raw(backbone, None, &p.lr.center_subset(EVAL_ANGULAR)?)?,
                a => super_resolve_raw(backbone, adapt, &p.lr.center_subset(a)?)?.center_subset(EVAL_ANGULAR)?,
            };
            evaluate_lf(&sr, &p.hr.center_subset(EVAL_ANGULAR)?, &opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_over_scenes(&reports))
}

/// Trains and scores every row; `progress` receives one line per finished stage.
pub fn run_ablation(cfg: &AblationConfig, progress: &mut dyn FnMut(&str)) -> Result<AblationReport> {
    cfg.validate()?;
    let scale = cfg.backbone.scale;
    let channels = cfg.backbone.backbone.image_channels;
    let train = synth_dataset(cfg.train_count, SOURCE_ANGULAR, cfg.disparity, cfg.size, cfg.data_seed)?;
    let test = prepare_pairs(
        &synth_dataset(cfg.test_count, SOURCE_ANGULAR, cfg.disparity, cfg.size, cfg.test_seed)?,
        scale,
        channels,
    )?;

    let t = Instant::now();
    let backbone_cfg = TrainConfig {
        angular: SOURCE_ANGULAR,
        ..cfg.backbone.clone()
    };
    let backbone = train_backbone(&train, &backbone_cfg)?.params.set_frozen(true);
    let backbone_seconds = t.elapsed().as_secs_f64();
    progress(&format!("backbone trained in {backbone_seconds:.1}s"));

    let mut rows = Vec::new();
    for row in ablation_rows() {
        let t = Instant::now();
        let (adapt, final_loss) = match row.flags {
            None => (None, None),
            Some(flags) => {
                let data = match row.angular {
                    SOURCE_ANGULAR => train.clone(),
                    a => train.iter().map(|lf| lf.center_subset(a)).collect::<Result<Vec<_>>>()?,
                };
                let run_cfg = TrainConfig {
                    angular: row.angular,
                    flags,
                    ..cfg.adapt.clone()
                };
                let out = train_adaptation(&data, &backbone, &run_cfg)?;
                let loss = out.final_loss();
                (Some(out.params), loss)
            }
        };
        let (mean_psnr, mean_ssim) = score(&backbone, adapt.as_ref(), row.angular, &test)?;
        let seconds = t.elapsed().as_secs_f64();
        progress(&format!("{:<12} {mean_psnr:.3} dB  {seconds:.1}s", row.name));
        rows.push(AblationResult {
            name: row.name.to_string(),
            angular: row.angular,
            mean_psnr,
            mean_ssim,
            final_loss,
            seconds,
        });
    }
    Ok(AblationReport {
        scale,
        eval_angular: EVAL_ANGULAR,
        backbone_seconds,
        rows,
    })
}
