//! Spherical Fourier Neural Operator.
//!
//! Architecture, applied pointwise over the grid except for the spectral
//! convolutions:
//!
//! ```text
//! x0  = [v_norm, sin(lat), cos(2 lat)]             (position embedding optional)
//! h   = W_e2 act(W_e1 x0 + b_e1) + b_e2             encoder
//! repeat n_layers:
//!     y = ISHT(K · SHT(h))                          spectral convolution
//!     h = act(W_m y + b_m) + s · h                   pointwise MLP + scaled skip
//! out = W_d2 act(W_d1 h + b_d1) + b_d2              decoder, one channel per radius
//! ```
//!
//! Gradients are computed by hand in reverse mode, using the SHT adjoints
//! for the spectral layers.

mod adam;
mod checkpoint;
mod loss;
mod model;
mod params;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CurvePoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{loss_l2_2d, loss_l2_2d_grad, BatchSpec};
pub use model::{GridContext, Tape};
pub use params::{Activation, ParamBlock, ParamLayout, SfnoConfig, SfnoParams, SpectralKind};
pub use train::{cross_validate, infer_multires, predict, train, train_on_cubes, CvRow, CvTable, Sample, TrainOptions};

use thiserror::Error;

use crate::grid::GridError;
use crate::sht::ShtError;
use crate::storage::StorageError;

#[derive(Debug, Error)]
pub enum SfnoError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("non-physical prediction: {0}")]
    NonPhysical(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Sht(#[from] ShtError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
