//! Two-phase training: backbone pre-training on single views, then
//! adaptation-module training on top of the frozen backbone.

pub mod checkpoint;
pub mod config;
pub mod run;

pub use checkpoint::{load_adaptation, load_backbone, save_adaptation, save_backbone, CheckpointKind, Metadata};
pub use config::{Phase, Preset, TrainConfig};
pub use run::{
    adaptation_loss, init_adaptation, prepare_pairs, sample_lf_batch, sample_view_batch, split, train_adaptation,
    train_adaptation_with, train_backbone, train_backbone_with, validation_psnr, Batch, LogRecord, TrainOutcome,
    TrainPair,
};
