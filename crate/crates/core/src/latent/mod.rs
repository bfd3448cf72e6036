//! Latent-action representation learners: the discrete DI-VAE and DI-VST
//! objectives, a continuous VAE baseline, code extraction and posterior
//! diagnostics.
//!
//! Posteriors over `m` variables with `k` classes are laid out as
//! `[batch * m, k]`; row `b * m + i` holds variable `i` of example `b`.

mod model;
mod ops;
mod train;

pub use model::{LaedConfig, LatentBatch, LatentConfig, LatentLoss, LatentModel, LatentVariant};
pub use ops::{
    aggregate_posterior, aggregate_posterior_kl, gaussian_kl, gumbel_noise, gumbel_softmax_sample, mutual_information,
    one_hot_argmax, posterior_diagnostics,
};
pub use train::{
    assign_codes, cluster_purity, pretrain, pretrain_dialogue, pretrain_utterances, pretrain_utterances_until,
    CodeAssignment, PretrainConfig, PretrainLogEntry,
};

use crate::corpus::Utterance;
use crate::error::Result;
use crate::tensor::{Tape, Tensor};

/// Frozen dialogue-level encoding of one context, `[1, ctx_hidden]`.
pub fn laed_context_encode(model: &LatentModel, context: &[Utterance], domain: &str) -> Result<Tensor> {
    let mut tape = Tape::with_precision(model.precision);
    let p = model.params.bind(&mut tape, false);
    let inputs = model.context_inputs(domain, context);
    let v = model.context_encode(&mut tape, &p, &[inputs])?;
    Ok(tape.value(v).clone())
}
