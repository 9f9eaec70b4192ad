//! Self-over-co attention for multi-level user interest modeling.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense `f64` matrices, a define-by-run autodiff tape and a
//!   central-difference gradient checker.
//! - [`soc`]: co-attention across the like/follow levels, self-attention
//!   within each level, and count-weighted interest pooling.
//! - [`model`]: a compact click-prediction model that embeds the module.
//! - [`data`]: interaction-log CSV IO, user filtering, per-user
//!   chronological splitting, and a synthetic generator.
//! - [`metrics`]: AUC and precision/recall/F at K.
//! - [`training`]: loss, optimizers, the training loop and the ablation
//!   runner.
//! - [`checkpoint`]: the binary model-file format.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod soc;
pub mod tensor;
pub mod training;

pub use error::{Error, ErrorKind, Result};
pub use model::{ItemTable, ScaaModel, UserHistory};
pub use soc::{SocOptions, SocParams, SocVariant};
pub use tensor::Matrix;
