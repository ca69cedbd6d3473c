//! Dual-stream cross-attention context fusion for emotion recognition,
//! operating on precomputed or synthetic feature streams.
//!
//! The crate provides a small reverse-mode tensor core, the two encoder
//! layer variants and their stacking rule, the assembled fusion model,
//! training objectives and optimizers, evaluation metrics, and a compact
//! binary dataset format.

pub mod attention;
pub mod autograd;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod train;

pub use autograd::{Mode, Tape, VarId};
pub use error::{McfError, Result};
pub use model::{Geometry, McfConfig, McfModel, McfOutput, StreamSample, Streams, Task};
pub use params::{ParamId, ParamStore, Parameter};
pub use rng::RngState;
pub use tensor::Tensor;
