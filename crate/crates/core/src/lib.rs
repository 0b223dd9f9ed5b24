//! Deep metric learning with density-aware adaptive line prototypes.
//!
//! Modules, bottom up:
//! - [`numerics`]: dense matrices and the seeded random stream.
//! - [`losses`]: softmax, normalized and margin softmax, triplet, center and
//!   triplet-center losses with analytic gradients.
//! - [`daal`]: per-class line-segment prototypes and the DAAL loss.
//! - [`model`]: a dense Swish network trained by SGD with momentum.
//! - [`data`]: synthetic multi-modal datasets and the feature CSV format.
//! - [`metrics`]: k-means, NMI and Recall@K.
//! - [`cli`]: the `daal` command-line experiments.

pub mod batch;
#[cfg(feature = "cli")]
pub mod cli;
pub mod daal;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;

pub use batch::EmbeddingBatch;
pub use error::{Error, Result};
pub use numerics::{Matrix, RngState};
