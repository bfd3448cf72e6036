//! The few-shot response generator. Its context encoding concatenates, in
//! order, any frozen latent-action context encodings and its own
//! hierarchical encoding; training mixes source-domain batches with target
//! seed batches.

mod model;
mod train;

pub use model::{Encoded, EncodedDescription, FsdgConfig, FsdgLoss, FsdgModel, FsdgVariant};
pub use train::{evaluate_nll, train, TrainConfig, TrainLogEntry, TrainSummary};
