use serde::{Deserialize, Serialize};

use super::ops::{aggregate_posterior_kl, gaussian_kl, gumbel_noise, gumbel_softmax_sample, one_hot_argmax};
use crate::corpus::vocab::{EMPTY, EOS};
use crate::corpus::{Triple, Utterance, Vocabulary};
use crate::error::{Error, Result};
use crate::neural::{Decoder, DialogueEncoder, Embedding, Linear, UtteranceEncoder};
use crate::rng::Rng;
use crate::tensor::{kernels, Binding, ParamId, ParamSet, Precision, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentVariant {
    /// Reconstructs the utterance itself from a discrete code.
    DiVae,
    /// Reconstructs the previous and next utterances from a discrete code.
    DiVst,
    /// Continuous Gaussian latent reconstructing the utterance.
    Vae,
}

impl LatentVariant {
    pub fn decoders(self) -> usize {
        match self {
            LatentVariant::DiVst => 2,
            _ => 1,
        }
    }

    pub fn is_discrete(self) -> bool {
        self != LatentVariant::Vae
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatentConfig {
    /// Number of latent variables.
    pub m: usize,
    /// Classes per variable.
    pub k: usize,
    pub tau: f64,
    /// Temperature reached at the end of a linear anneal; ignored when
    /// `anneal_steps` is 0.
    pub tau_final: f64,
    pub anneal_steps: usize,
    pub straight_through: bool,
    /// Width of the per-variable code embeddings (summed over variables).
    pub code_dim: usize,
    /// Width of the continuous latent.
    pub gaussian_dim: usize,
    /// Log-variance is clamped to `[-logvar_limit, logvar_limit]`.
    pub logvar_limit: f64,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            m: 10,
            k: 5,
            tau: 1.0,
            tau_final: 0.5,
            anneal_steps: 0,
            straight_through: true,
            code_dim: 64,
            gaussian_dim: 50,
            logvar_limit: 8.0,
        }
    }
}

impl LatentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 || self.k < 2 {
            return Err(Error::Config(format!(
                "latent size {}x{} needs M >= 1, K >= 2",
                self.m, self.k
            )));
        }
        if !(self.tau > 0.0) || !(self.tau_final > 0.0) {
            return Err(Error::Config("Gumbel temperature must be positive".into()));
        }
        if self.code_dim == 0 || self.gaussian_dim == 0 || !(self.logvar_limit > 0.0) {
            return Err(Error::Config(
                "latent widths and log-variance limit must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Temperature at a training step.
    pub fn tau_at(&self, step: usize) -> f64 {
        if self.anneal_steps == 0 {
            return self.tau;
        }
        let f = (step as f64 / self.anneal_steps as f64).min(1.0);
        self.tau + (self.tau_final - self.tau) * f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaedConfig {
    pub variant: LatentVariant,
    pub latent: LatentConfig,
    pub embed_dim: usize,
    pub utt_hidden: usize,
    pub dec_hidden: usize,
    pub ctx_hidden: usize,
}

impl Default for LaedConfig {
    fn default() -> Self {
        Self {
            variant: LatentVariant::DiVae,
            latent: LatentConfig::default(),
            embed_dim: 128,
            utt_hidden: 256,
            dec_hidden: 256,
            ctx_hidden: 512,
        }
    }
}

impl LaedConfig {
    pub fn validate(&self) -> Result<()> {
        self.latent.validate()?;
        if [self.embed_dim, self.utt_hidden, self.dec_hidden, self.ctx_hidden].contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        Ok(())
    }

    /// Width of one utterance's latent summary fed to the dialogue encoder.
    pub fn latent_width(&self) -> usize {
        if self.variant.is_discrete() {
            self.latent.m * self.latent.k
        } else {
            self.latent.gaussian_dim
        }
    }
}

/// Recognition inputs and per-decoder reconstruction targets.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBatch {
    /// `[domain] ++ [role] ++ words ++ [EOS]` per example.
    pub inputs: Vec<Vec<usize>>,
    /// `targets[decoder][example]`: words followed by `EOS`.
    pub targets: Vec<Vec<Vec<usize>>>,
}

impl LatentBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> LatentBatch {
        LatentBatch {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: self
                .targets
                .iter()
                .map(|t| idx.iter().map(|&i| t[i].clone()).collect())
                .collect(),
        }
    }
}

/// Loss value and its parts for one batch.
#[derive(Clone, Debug)]
pub struct LatentLoss {
    pub total: Var,
    /// Mean reconstruction negative log-likelihood per example.
    pub nll: f64,
    /// Aggregate-posterior KL (discrete) or mean Gaussian KL (continuous).
    pub kl: f64,
}

/// A latent-action model: recognition network, code embedding, generator
/// decoder(s) and a dialogue-level encoder over per-utterance posteriors.
#[derive(Clone, Debug)]
pub struct LatentModel {
    pub config: LaedConfig,
    pub vocab: Vocabulary,
    pub params: ParamSet,
    pub precision: Precision,
    pub emb: Embedding,
    pub recog: UtteranceEncoder,
    pub head: Linear,
    pub code_table: ParamId,
    pub decoders: Vec<Decoder>,
    pub dialogue: DialogueEncoder,
    pub predictor: Linear,
}

impl LatentModel {
    pub fn new(config: LaedConfig, vocab: Vocabulary, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let v = vocab.len();
        let lw = config.latent_width();
        let emb = Embedding::new(&mut params, "laed.emb", v, config.embed_dim, rng);
        let recog = UtteranceEncoder::new(&mut params, "laed.recog", config.embed_dim, config.utt_hidden, rng);
        let head_out = if config.variant.is_discrete() { lw } else { 2 * lw };
        let head = Linear::new(&mut params, "laed.head", config.utt_hidden, head_out, rng);
        let code_table = params.add_scaled_normal("laed.code_table", &[lw, config.latent.code_dim], rng);
        let names = match config.variant {
            LatentVariant::DiVst => vec!["laed.dec_prev", "laed.dec_next"],
            _ => vec!["laed.dec"],
        };
        let decoders = names
            .into_iter()
            .map(|n| {
                Decoder::new(
                    &mut params,
                    n,
                    config.latent.code_dim,
                    config.embed_dim,
                    config.dec_hidden,
                    v,
                    rng,
                )
            })
            .collect();
        let dialogue = DialogueEncoder::new(&mut params, "laed.dialogue", lw, config.ctx_hidden, rng);
        let predictor = Linear::new(&mut params, "laed.predictor", config.ctx_hidden, lw, rng);
        Ok(Self {
            config,
            vocab,
            params,
            precision: Precision::F64,
            emb,
            recog,
            head,
            code_table,
            decoders,
            dialogue,
            predictor,
        })
    }

    pub fn variant(&self) -> LatentVariant {
        self.config.variant
    }

    pub fn context_width(&self) -> usize {
        self.config.ctx_hidden
    }

    pub fn m(&self) -> usize {
        self.config.latent.m
    }

    pub fn k(&self) -> usize {
        self.config.latent.k
    }

    /// Recognition input for one utterance.
    pub fn input_ids(&self, domain: &str, u: &Utterance) -> Vec<usize> {
        let mut ids = vec![self.vocab.domain_id_or_unk(domain)];
        ids.extend(self.vocab.encode_utterance(u));
        ids
    }

    fn target_ids(&self, u: Option<&Utterance>) -> Vec<usize> {
        match u {
            Some(u) => self.vocab.encode_response(&u.tokens),
            None => vec![EMPTY, EOS],
        }
    }

    pub fn batch_from_triples(&self, triples: &[Triple]) -> LatentBatch {
        let inputs = triples.iter().map(|t| self.input_ids(&t.domain, &t.mid)).collect();
        let targets = match self.variant() {
            LatentVariant::DiVst => vec![
                triples.iter().map(|t| self.target_ids(t.prev.as_ref())).collect(),
                triples.iter().map(|t| self.target_ids(t.next.as_ref())).collect(),
            ],
            _ => vec![triples.iter().map(|t| self.target_ids(Some(&t.mid))).collect()],
        };
        LatentBatch { inputs, targets }
    }

    /// Discrete head logits as `[batch * m, k]`.
    pub fn logits(&self, tape: &mut Tape, p: &Binding, inputs: &[Vec<usize>]) -> Result<Var> {
        if !self.variant().is_discrete() {
            return Err(Error::invalid("continuous model has no categorical posterior"));
        }
        let h = self.recog.encode_sequences(tape, p, &self.emb, inputs)?;
        let z = self.head.forward(tape, p, h)?;
        tape.reshape(z, &[inputs.len() * self.m(), self.k()])
    }

    /// Gaussian mean and clamped log-variance, each `[batch, gaussian_dim]`.
    pub fn gaussian(&self, tape: &mut Tape, p: &Binding, inputs: &[Vec<usize>]) -> Result<(Var, Var)> {
        if self.variant().is_discrete() {
            return Err(Error::invalid("discrete model has no Gaussian head"));
        }
        let g = self.config.latent_width();
        let h = self.recog.encode_sequences(tape, p, &self.emb, inputs)?;
        let z = self.head.forward(tape, p, h)?;
        let mu = tape.slice_cols(z, 0, g)?;
        let lv = tape.slice_cols(z, g, g)?;
        let lim = self.config.latent.logvar_limit;
        Ok((mu, tape.clamp(lv, -lim, lim)))
    }

    /// Per-utterance latent summary `[batch, latent_width]`: flattened
    /// posterior probabilities, or the Gaussian mean.
    pub fn summary(&self, tape: &mut Tape, p: &Binding, inputs: &[Vec<usize>]) -> Result<Var> {
        if self.variant().is_discrete() {
            let l = self.logits(tape, p, inputs)?;
            let probs = tape.softmax(l);
            tape.reshape(probs, &[inputs.len(), self.config.latent_width()])
        } else {
            Ok(self.gaussian(tape, p, inputs)?.0)
        }
    }

    /// Noise tensor for one training batch.
    pub fn sample_noise(&self, batch: usize, rng: &mut Rng) -> Tensor {
        if self.variant().is_discrete() {
            gumbel_noise(rng, batch * self.m(), self.k())
        } else {
            let g = self.config.latent_width();
            Tensor::matrix(batch, g, (0..batch * g).map(|_| rng.normal()).collect())
        }
    }

    /// Training objective: mean reconstruction NLL plus the KL term, with
    /// sampling driven by the supplied noise.
    pub fn loss(
        &self,
        tape: &mut Tape,
        p: &Binding,
        batch: &LatentBatch,
        noise: &Tensor,
        tau: f64,
    ) -> Result<LatentLoss> {
        let b = batch.len();
        if b == 0 {
            return Err(Error::invalid("empty latent batch"));
        }
        if batch.targets.len() != self.decoders.len() {
            return Err(Error::invalid("batch targets do not match the decoder count"));
        }
        let (z, kl) = if self.variant().is_discrete() {
            let logits = self.logits(tape, p, &batch.inputs)?;
            let probs = tape.softmax(logits);
            let kl = aggregate_posterior_kl(tape, probs, self.m(), self.k())?;
            let (y, _) = gumbel_softmax_sample(tape, logits, noise, tau, self.config.latent.straight_through)?;
            (tape.reshape(y, &[b, self.config.latent_width()])?, kl)
        } else {
            let (mu, lv) = self.gaussian(tape, p, &batch.inputs)?;
            let half = tape.scale(lv, 0.5);
            let std = tape.exp(half);
            let eps = tape.constant(noise.clone());
            let s = tape.mul(std, eps)?;
            let z = tape.add(mu, s)?;
            let kl = gaussian_kl(tape, mu, lv)?;
            (z, tape.scale(kl, 1.0 / b as f64))
        };
        let code = tape.matmul(z, p[self.code_table])?;
        let mut nll_terms = Vec::with_capacity(self.decoders.len());
        for (dec, gold) in self.decoders.iter().zip(&batch.targets) {
            let h0 = dec.initial_state(tape, p, code)?;
            nll_terms.push(dec.nll(tape, p, &self.emb, h0, gold)?);
        }
        let mut nll = nll_terms[0];
        for &t in &nll_terms[1..] {
            nll = tape.add(nll, t)?;
        }
        let nll = tape.scale(nll, 1.0 / b as f64);
        let total = tape.add(nll, kl)?;
        Ok(LatentLoss {
            total,
            nll: tape.value(nll).item(),
            kl: tape.value(kl).item(),
        })
    }

    fn frozen_tape(&self) -> (Tape, Binding) {
        let mut tape = Tape::with_precision(self.precision);
        let p = self.params.bind(&mut tape, false);
        (tape, p)
    }

    /// Posterior log-probabilities `[batch * m, k]`.
    pub fn posterior(&self, inputs: &[Vec<usize>]) -> Result<Tensor> {
        let (mut tape, p) = self.frozen_tape();
        let l = self.logits(&mut tape, &p, inputs)?;
        let lp = tape.log_softmax(l);
        Ok(tape.value(lp).clone())
    }

    /// Posterior probabilities `[batch * m, k]`.
    pub fn posterior_probs(&self, inputs: &[Vec<usize>]) -> Result<Tensor> {
        let (mut tape, p) = self.frozen_tape();
        let l = self.logits(&mut tape, &p, inputs)?;
        let pr = tape.softmax(l);
        Ok(tape.value(pr).clone())
    }

    /// Per-variable argmax codes, ties to the lowest class.
    pub fn extract_codes(&self, inputs: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
        let lp = self.posterior(inputs)?;
        let m = self.m();
        Ok((0..inputs.len())
            .map(|b| (0..m).map(|i| kernels::argmax(lp.row_slice(b * m + i))).collect())
            .collect())
    }

    /// Greedy output of decoder `which` from the argmax code (discrete) or
    /// the posterior mean (continuous).
    pub fn reconstruct(&self, inputs: &[Vec<usize>], which: usize, max_len: usize) -> Result<Vec<Vec<usize>>> {
        let dec = self
            .decoders
            .get(which)
            .ok_or_else(|| Error::invalid(format!("model has no decoder {which}")))?;
        let (mut tape, p) = self.frozen_tape();
        let z = if self.variant().is_discrete() {
            let l = self.logits(&mut tape, &p, inputs)?;
            let hard = one_hot_argmax(tape.value(l));
            let y = tape.constant(hard);
            tape.reshape(y, &[inputs.len(), self.config.latent_width()])?
        } else {
            self.gaussian(&mut tape, &p, inputs)?.0
        };
        let code = tape.matmul(z, p[self.code_table])?;
        let h0 = dec.initial_state(&mut tape, &p, code)?;
        dec.greedy(&mut tape, &p, &self.emb, h0, max_len)
    }

    /// Dialogue-level encoding of contexts; `contexts[b]` lists its
    /// utterances' recognition inputs. Returns `[batch, ctx_hidden]`.
    pub fn context_encode(&self, tape: &mut Tape, p: &Binding, contexts: &[Vec<Vec<usize>>]) -> Result<Var> {
        let flat: Vec<Vec<usize>> = contexts.iter().flatten().cloned().collect();
        let lengths: Vec<usize> = contexts.iter().map(Vec::len).collect();
        if flat.is_empty() {
            return Err(Error::invalid("empty dialogue context"));
        }
        let s = self.summary(tape, p, &flat)?;
        self.dialogue.encode_flat(tape, p, s, &lengths)
    }

    /// Recognition inputs for a context; an empty context becomes one
    /// `[EMPTY, EOS]` utterance.
    pub fn context_inputs(&self, domain: &str, context: &[Utterance]) -> Vec<Vec<usize>> {
        let d = self.vocab.domain_id_or_unk(domain);
        self.vocab
            .encode_context(context)
            .into_iter()
            .map(|u| std::iter::once(d).chain(u).collect())
            .collect()
    }
}
