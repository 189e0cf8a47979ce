pub mod ablation;
pub mod adapt;
pub mod backbone;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod train;

pub use error::{Error, Result};
