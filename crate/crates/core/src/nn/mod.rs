//! Convolutional multitask network, written from scratch in `f64`.
//!
//! Tensors are `NCHW`. The intent head outputs probabilities ordered
//! `[deceptive, disruptive, non-adversarial]`; the capability head outputs
//! `log10` BER.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod model;
pub mod train;

pub use adam::AdamConfig;
pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use model::{ConvSpec, LossBreakdown, Model, NetworkConfig, TaskMode, CLASSES};
pub use train::{StepLog, TrainConfig, TrainingSet};
