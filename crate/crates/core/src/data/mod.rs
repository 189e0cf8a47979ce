//! Light-field containers, PNG I/O, colour conversion, resampling, synthetic
//! light fields and training patch sampling.

pub mod color;
pub mod degrade;
pub mod io;
pub mod lightfield;
pub mod patch;
pub mod resize;
pub mod synth;

pub use lightfield::{ColorSpace, LightField, SaiIndex};
pub use patch::{augment, sample_patch, Augmentation, CropOffset, PatchPair};
