//! Margin-mixup training and multi-speaker evaluation for speaker-verification
//! embeddings, at desk scale on synthetic speakers.

pub mod error;
pub mod eval;
pub mod experiments;
pub mod loss;
pub mod mixup;
pub mod model;
pub mod seed;
pub mod signal;

pub use error::{Error, Result};
