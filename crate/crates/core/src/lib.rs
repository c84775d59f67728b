//! Sky-image based GHI nowcasting and forecasting.
//!
//! Images are downsampled and flattened into pixel vectors; forecast inputs concatenate a
//! look-back window of frames and are compressed with a truncated SVD before regression.
//! Nowcasts regress directly on the raw pixel vector.

pub mod error;
pub mod ingest;
pub mod linalg;
pub mod lsa;
pub mod matrix_io;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod regress;
pub mod synth;
pub mod time;

pub use error::{GhiError, Result};
