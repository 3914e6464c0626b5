//! TransRPPG: remote-photoplethysmography transformer for 3D mask face
//! presentation attack detection.
//!
//! Pipeline: per-region color traces -> multi-scale spatio-temporal maps
//! (face and background) -> two-branch shared-encoder vision transformer
//! with three supervised class tokens -> liveness score. Around the model
//! sit a synthetic trace generator, an Adam trainer, and the biometric
//! metric suite with a leave-one-subject-out runner.

pub mod config;
pub mod eval;
pub mod mstmap;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;

pub use config::{ConfigError, RunConfig};
pub use eval::{MetricsReport, ScoredSet};
pub use model::{ModelConfig, ModelWeights, TransRppg};
pub use mstmap::{MstMap, RegionTraceSet};
pub use synth::SynthConfig;
pub use tensor::{Tape, Tensor, TensorError, Var};
pub use train::{TrainConfig, TrainLog};
