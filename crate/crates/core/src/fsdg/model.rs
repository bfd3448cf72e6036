use serde::{Deserialize, Serialize};

use crate::corpus::vocab::EOS;
use crate::corpus::{DescriptionExample, TrainingExample, Utterance, Vocabulary};
use crate::error::{Error, Result};
use crate::latent::{laed_context_encode, LatentModel, LatentVariant};
use crate::neural::{Decoder, DialogueEncoder, Embedding, Linear, UtteranceEncoder};
use crate::rng::Rng;
use crate::tensor::{Binding, ParamSet, Precision, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FsdgVariant {
    #[serde(rename = "fsdg")]
    Fsdg,
    #[serde(rename = "fsdg+vae")]
    FsdgVae,
    #[serde(rename = "fsdg+laed")]
    FsdgLaed,
}

impl FsdgVariant {
    /// Latent encoders this variant concatenates, in encoding order.
    pub fn auxiliary(self) -> &'static [LatentVariant] {
        match self {
            FsdgVariant::Fsdg => &[],
            FsdgVariant::FsdgVae => &[LatentVariant::Vae],
            FsdgVariant::FsdgLaed => &[LatentVariant::DiVae, LatentVariant::DiVst],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FsdgVariant::Fsdg => "fsdg",
            FsdgVariant::FsdgVae => "fsdg+vae",
            FsdgVariant::FsdgLaed => "fsdg+laed",
        }
    }
}

impl std::str::FromStr for FsdgVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fsdg" => Ok(FsdgVariant::Fsdg),
            "fsdg+vae" | "fsdg-vae" => Ok(FsdgVariant::FsdgVae),
            "fsdg+laed" | "fsdg-laed" => Ok(FsdgVariant::FsdgLaed),
            _ => Err(Error::Config(format!("unknown model variant `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FsdgConfig {
    pub variant: FsdgVariant,
    pub embed_dim: usize,
    pub utt_hidden: usize,
    pub ctx_hidden: usize,
    pub dec_hidden: usize,
    /// Weight of the latent-space distance terms.
    pub lambda: f64,
    /// Keep training the attached latent encoders instead of freezing them.
    pub fine_tune_latent: bool,
}

impl Default for FsdgConfig {
    fn default() -> Self {
        Self {
            variant: FsdgVariant::Fsdg,
            embed_dim: 128,
            utt_hidden: 256,
            ctx_hidden: 512,
            dec_hidden: 512,
            lambda: 1.0,
            fine_tune_latent: false,
        }
    }
}

impl FsdgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.utt_hidden == 0 || self.ctx_hidden == 0 || self.dec_hidden == 0 {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// A context/response pair turned into ids for every encoder.
#[derive(Clone, Debug)]
pub struct Encoded {
    /// Own-vocabulary context utterances, each prefixed by the domain id.
    pub context: Vec<Vec<usize>>,
    /// Per latent encoder, the context in that encoder's vocabulary.
    pub aux_context: Vec<Vec<Vec<usize>>>,
    /// Frozen latent encodings `[1, width]`, filled when encoders are frozen.
    pub aux_cache: Vec<Tensor>,
    /// Decoder target, words then `EOS`.
    pub response: Vec<usize>,
    /// Recognition input for the response.
    pub recog: Vec<usize>,
}

/// An annotation/utterance pair for the domain-description objective.
#[derive(Clone, Debug)]
pub struct EncodedDescription {
    pub annotation: Vec<usize>,
    pub recog: Vec<usize>,
    pub response: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
pub struct FsdgLoss {
    pub total: Var,
    pub nll: f64,
    pub distance: f64,
}

/// Response generator over a hierarchical context encoder, optionally
/// concatenating frozen latent-action context encodings.
#[derive(Clone, Debug)]
pub struct FsdgModel {
    pub config: FsdgConfig,
    pub vocab: Vocabulary,
    pub params: ParamSet,
    pub precision: Precision,
    pub emb: Embedding,
    pub recog: UtteranceEncoder,
    pub dialogue: DialogueEncoder,
    pub decoder: Decoder,
    pub proj_rec: Linear,
    pub dd_init: Linear,
    pub aux: Vec<LatentModel>,
}

impl FsdgModel {
    /// `aux` must hold exactly the latent models the variant asks for, in
    /// order. Weights on the auxiliary inputs start at zero and all other
    /// weights draw the same random numbers for every variant.
    pub fn new(config: FsdgConfig, vocab: Vocabulary, aux: Vec<LatentModel>, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let want = config.variant.auxiliary();
        let got: Vec<LatentVariant> = aux.iter().map(LatentModel::variant).collect();
        if got != want {
            return Err(Error::Config(format!(
                "variant {} needs latent encoders {:?}, got {:?}",
                config.variant.name(),
                want,
                got
            )));
        }
        let aux_width: usize = aux.iter().map(LatentModel::context_width).sum();
        let combined = aux_width + config.ctx_hidden;
        let v = vocab.len();
        let mut params = ParamSet::new();
        let emb = Embedding::new(&mut params, "fsdg.emb", v, config.embed_dim, rng);
        let recog = UtteranceEncoder::new(&mut params, "fsdg.recog", config.embed_dim, config.utt_hidden, rng);
        let dialogue = DialogueEncoder::new(&mut params, "fsdg.dialogue", config.utt_hidden, config.ctx_hidden, rng);
        let init = zero_prefixed(
            &mut params,
            "fsdg.dec.init",
            combined,
            config.dec_hidden,
            aux_width,
            rng,
        );
        let decoder = Decoder::with_init(
            &mut params,
            "fsdg.dec",
            init,
            config.embed_dim,
            config.dec_hidden,
            v,
            rng,
        );
        let proj_rec = zero_prefixed(
            &mut params,
            "fsdg.proj_rec",
            combined,
            config.utt_hidden,
            aux_width,
            rng,
        );
        let dd_init = Linear::new(&mut params, "fsdg.dd_init", config.utt_hidden, config.dec_hidden, rng);
        Ok(Self {
            config,
            vocab,
            params,
            precision: Precision::F64,
            emb,
            recog,
            dialogue,
            decoder,
            proj_rec,
            dd_init,
            aux,
        })
    }

    pub fn variant(&self) -> FsdgVariant {
        self.config.variant
    }

    pub fn aux_width(&self) -> usize {
        self.aux.iter().map(LatentModel::context_width).sum()
    }

    pub fn combined_width(&self) -> usize {
        self.aux_width() + self.config.ctx_hidden
    }

    fn uses_cache(&self) -> bool {
        !self.config.fine_tune_latent
    }

    fn recog_ids<S: AsRef<str>>(&self, domain: usize, tokens: &[S]) -> Vec<usize> {
        let mut ids = vec![domain];
        ids.extend(self.vocab.encode_tokens(tokens));
        ids.push(EOS);
        ids
    }

    /// Ids for one context; the domain must be known to the vocabulary.
    pub fn encode_context(&self, domain: &str, context: &[Utterance]) -> Result<Encoded> {
        let d = self.vocab.domain_id(domain)?;
        let own = self
            .vocab
            .encode_context(context)
            .into_iter()
            .map(|u| std::iter::once(d).chain(u).collect())
            .collect();
        let aux_context = self.aux.iter().map(|m| m.context_inputs(domain, context)).collect();
        let aux_cache = if self.uses_cache() {
            self.aux
                .iter()
                .map(|m| laed_context_encode(m, context, domain))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Encoded {
            context: own,
            aux_context,
            aux_cache,
            response: Vec::new(),
            recog: vec![d, EOS],
        })
    }

    pub fn encode_example(&self, ex: &TrainingExample) -> Result<Encoded> {
        let mut e = self.encode_context(&ex.domain, &ex.context)?;
        e.response = self.vocab.encode_response(&ex.response);
        e.recog = self.recog_ids(e.context[0][0], &ex.response);
        Ok(e)
    }

    pub fn encode_examples(&self, exs: &[TrainingExample]) -> Result<Vec<Encoded>> {
        exs.iter().map(|e| self.encode_example(e)).collect()
    }

    /// Rejects the whole batch when any annotation is empty.
    pub fn encode_descriptions(&self, exs: &[DescriptionExample]) -> Result<Vec<EncodedDescription>> {
        let missing = exs.iter().filter(|e| e.annotation.is_empty()).count();
        if missing > 0 {
            return Err(Error::invalid(format!(
                "{missing} of {} domain-description examples have no annotation",
                exs.len()
            )));
        }
        exs.iter()
            .map(|e| {
                let d = self.vocab.domain_id(&e.domain)?;
                Ok(EncodedDescription {
                    annotation: self.recog_ids(d, &e.annotation),
                    recog: self.recog_ids(d, &e.utterance.tokens),
                    response: self.vocab.encode_response(&e.utterance.tokens),
                })
            })
            .collect()
    }

    /// Bind the latent encoders on `tape` when they are computed live.
    pub fn bind_aux(&self, tape: &mut Tape) -> Vec<Binding> {
        if self.uses_cache() {
            Vec::new()
        } else {
            self.aux.iter().map(|m| m.params.bind(tape, true)).collect()
        }
    }

    /// Combined context encoding `[batch, combined_width]`, latent blocks
    /// first in encoder order, own dialogue encoding last. With `aux` empty
    /// the cached frozen encodings are used.
    pub fn combined_encode(&self, tape: &mut Tape, p: &Binding, aux: &[Binding], batch: &[&Encoded]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut parts = Vec::with_capacity(self.aux.len() + 1);
        for (i, m) in self.aux.iter().enumerate() {
            if let Some(ab) = aux.get(i) {
                let ctxs: Vec<Vec<Vec<usize>>> = batch.iter().map(|e| e.aux_context[i].clone()).collect();
                parts.push(m.context_encode(tape, ab, &ctxs)?);
            } else {
                let w = m.context_width();
                let mut data = Vec::with_capacity(batch.len() * w);
                for e in batch {
                    let t = e
                        .aux_cache
                        .get(i)
                        .ok_or_else(|| Error::invalid("latent encoding missing from encoded example"))?;
                    data.extend_from_slice(t.data());
                }
                parts.push(tape.constant(Tensor::matrix(batch.len(), w, data)));
            }
        }
        let flat: Vec<Vec<usize>> = batch.iter().flat_map(|e| e.context.iter().cloned()).collect();
        let lengths: Vec<usize> = batch.iter().map(|e| e.context.len()).collect();
        let u = self.recog.encode_sequences(tape, p, &self.emb, &flat)?;
        parts.push(self.dialogue.encode_flat(tape, p, u, &lengths)?);
        if parts.len() == 1 {
            Ok(parts[0])
        } else {
            tape.concat_cols(&parts)
        }
    }

    /// Mean per-example NLL of the response plus `lambda` times the mean L2
    /// distance between the response's recognition encoding and the projected
    /// context encoding.
    pub fn dialogue_loss(&self, tape: &mut Tape, p: &Binding, aux: &[Binding], batch: &[&Encoded]) -> Result<FsdgLoss> {
        let b = batch.len() as f64;
        let c = self.combined_encode(tape, p, aux, batch)?;
        let h0 = self.decoder.initial_state(tape, p, c)?;
        let gold: Vec<Vec<usize>> = batch.iter().map(|e| e.response.clone()).collect();
        let nll = self.decoder.nll(tape, p, &self.emb, h0, &gold)?;
        let nll = tape.scale(nll, 1.0 / b);
        let nll_v = tape.value(nll).item();
        if self.config.lambda == 0.0 {
            return Ok(FsdgLoss {
                total: nll,
                nll: nll_v,
                distance: 0.0,
            });
        }
        let rs: Vec<Vec<usize>> = batch.iter().map(|e| e.recog.clone()).collect();
        let r = self.recog.encode_sequences(tape, p, &self.emb, &rs)?;
        let pc = self.proj_rec.forward(tape, p, c)?;
        let dist = self.distance(tape, r, pc)?;
        let weighted = tape.scale(dist, self.config.lambda);
        let total = tape.add(nll, weighted)?;
        Ok(FsdgLoss {
            total,
            nll: nll_v,
            distance: tape.value(dist).item(),
        })
    }

    fn distance(&self, tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
        let d = tape.sub(a, b)?;
        let n = tape.l2_norm_rows(d);
        Ok(tape.mean(n))
    }

    /// NLL of each utterance decoded from the recognition encoding of its
    /// annotation, plus `lambda` times their mean L2 distance.
    pub fn domain_description_loss(
        &self,
        tape: &mut Tape,
        p: &Binding,
        batch: &[&EncodedDescription],
    ) -> Result<FsdgLoss> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let b = batch.len() as f64;
        let anns: Vec<Vec<usize>> = batch.iter().map(|e| e.annotation.clone()).collect();
        let ra = self.recog.encode_sequences(tape, p, &self.emb, &anns)?;
        let z = self.dd_init.forward(tape, p, ra)?;
        let h0 = tape.tanh(z);
        let gold: Vec<Vec<usize>> = batch.iter().map(|e| e.response.clone()).collect();
        let nll = self.decoder.nll(tape, p, &self.emb, h0, &gold)?;
        let nll = tape.scale(nll, 1.0 / b);
        let nll_v = tape.value(nll).item();
        if self.config.lambda == 0.0 {
            return Ok(FsdgLoss {
                total: nll,
                nll: nll_v,
                distance: 0.0,
            });
        }
        let xs: Vec<Vec<usize>> = batch.iter().map(|e| e.recog.clone()).collect();
        let rx = self.recog.encode_sequences(tape, p, &self.emb, &xs)?;
        let dist = self.distance(tape, rx, ra)?;
        let weighted = tape.scale(dist, self.config.lambda);
        let total = tape.add(nll, weighted)?;
        Ok(FsdgLoss {
            total,
            nll: nll_v,
            distance: tape.value(dist).item(),
        })
    }

    /// Greedy responses for already encoded contexts.
    pub fn generate_encoded(&self, batch: &[&Encoded], max_len: usize) -> Result<Vec<Vec<String>>> {
        if max_len == 0 {
            return Err(Error::invalid("max_len must be positive"));
        }
        let mut tape = Tape::with_precision(self.precision);
        let p = self.params.bind(&mut tape, false);
        let aux: Vec<Binding> = if self.uses_cache() {
            Vec::new()
        } else {
            self.aux.iter().map(|m| m.params.bind(&mut tape, false)).collect()
        };
        let c = self.combined_encode(&mut tape, &p, &aux, batch)?;
        let h0 = self.decoder.initial_state(&mut tape, &p, c)?;
        let ids = self.decoder.greedy(&mut tape, &p, &self.emb, h0, max_len)?;
        Ok(ids.iter().map(|s| self.vocab.decode(s)).collect())
    }

    /// Greedy response to a context. The context already carries the KB
    /// pseudo-turn when there is one.
    pub fn generate_response(&self, context: &[Utterance], domain: &str, max_len: usize) -> Result<Vec<String>> {
        if max_len == 0 {
            return Err(Error::invalid("max_len must be positive"));
        }
        let e = self.encode_context(domain, context)?;
        Ok(self.generate_encoded(&[&e], max_len)?.remove(0))
    }

    /// Combined encoding of one context as a plain vector.
    pub fn encode_vector(&self, context: &[Utterance], domain: &str) -> Result<Tensor> {
        let e = self.encode_context(domain, context)?;
        let mut tape = Tape::with_precision(self.precision);
        let p = self.params.bind(&mut tape, false);
        let aux: Vec<Binding> = if self.uses_cache() {
            Vec::new()
        } else {
            self.aux.iter().map(|m| m.params.bind(&mut tape, false)).collect()
        };
        let c = self.combined_encode(&mut tape, &p, &aux, &[&e])?;
        Ok(tape.value(c).clone())
    }
}

fn zero_prefixed(params: &mut ParamSet, name: &str, input: usize, output: usize, zero: usize, rng: &mut Rng) -> Linear {
    if zero == 0 {
        Linear::new(params, name, input, output, rng)
    } else {
        Linear::with_zero_prefix(params, name, input, output, zero, rng)
    }
}
