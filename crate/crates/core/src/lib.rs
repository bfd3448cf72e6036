//! Few-shot dialogue generation with transferred discrete latent actions.
//!
//! The crate is layered bottom-up:
//!
//! - [`tensor`]: dense tensors, a reverse-mode tape, gradient checking and Adam.
//! - [`neural`]: embeddings, LSTM/GRU cells and the hierarchical encoder/decoder.
//! - [`corpus`]: dialogue data model, JSONL I/O, vocabulary, KB serialization,
//!   seed sampling, domain exclusion and a synthetic corpus generator.
//! - [`latent`]: DI-VAE / DI-VST discrete latent-action models and the
//!   continuous VAE baseline, with KL and mutual-information diagnostics.
//! - [`fsdg`]: the response generator with frozen latent encoders
//!   concatenated into its context encoding.
//! - [`eval`]: corpus BLEU, entity F1 and run aggregation.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod fsdg;
pub mod latent;
pub mod neural;
pub mod par;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
