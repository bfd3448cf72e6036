//! Recurrent building blocks and the hierarchical encoder/decoder skeleton.
//!
//! Sequences are processed in padded batches. Row `b` of a batch stops
//! updating its state once its own sequence ends, so a batched encoding is
//! identical to encoding each sequence on its own.

mod layers;

pub use layers::{masked_update, Embedding, GruCell, Linear, LstmCell, RECURRENT_INIT};

use crate::corpus::vocab::{BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{kernels, Binding, ParamSet, Tape, Tensor, Var};

/// Per-step token ids and validity masks for a batch of sequences.
#[derive(Clone, Debug)]
pub struct SeqBatch {
    pub steps: Vec<Vec<usize>>,
    pub masks: Vec<Option<Tensor>>,
    pub lengths: Vec<usize>,
}

impl SeqBatch {
    pub fn new<S: AsRef<[usize]>>(seqs: &[S]) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let lengths: Vec<usize> = seqs.iter().map(|s| s.as_ref().len()).collect();
        if lengths.contains(&0) {
            return Err(Error::invalid("empty sequence in batch"));
        }
        let max = *lengths.iter().max().unwrap();
        let b = seqs.len();
        let mut steps = Vec::with_capacity(max);
        let mut masks = Vec::with_capacity(max);
        for t in 0..max {
            steps.push(seqs.iter().map(|s| s.as_ref().get(t).copied().unwrap_or(PAD)).collect());
            masks.push(step_mask(&lengths, t, b));
        }
        Ok(Self { steps, masks, lengths })
    }
}

fn step_mask(lengths: &[usize], t: usize, b: usize) -> Option<Tensor> {
    if lengths.iter().all(|&l| t < l) {
        None
    } else {
        Some(Tensor::matrix(
            b,
            1,
            lengths.iter().map(|&l| if t < l { 1.0 } else { 0.0 }).collect(),
        ))
    }
}

/// Recurrent utterance encoder: LSTM over embedded tokens, final hidden state.
///
/// Every input is `[domain-token] ++ tokens`, so the same encoder serves all
/// domains.
#[derive(Clone, Debug)]
pub struct UtteranceEncoder {
    pub lstm: LstmCell,
}

impl UtteranceEncoder {
    pub fn new(params: &mut ParamSet, name: &str, embed_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            lstm: LstmCell::new(params, &format!("{name}.lstm"), embed_dim, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden
    }

    /// Encode `(domain, tokens)` pairs into `[batch, hidden]`.
    pub fn encode(&self, tape: &mut Tape, p: &Binding, emb: &Embedding, items: &[(usize, &[usize])]) -> Result<Var> {
        let seqs: Vec<Vec<usize>> = items
            .iter()
            .map(|(d, toks)| std::iter::once(*d).chain(toks.iter().copied()).collect())
            .collect();
        self.encode_sequences(tape, p, emb, &seqs)
    }

    /// Encode raw id sequences (already carrying any prefix). Sequences are
    /// run in groups of equal length, so no step is spent on padding.
    pub fn encode_sequences(&self, tape: &mut Tape, p: &Binding, emb: &Embedding, seqs: &[Vec<usize>]) -> Result<Var> {
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
        for (i, s) in seqs.iter().enumerate() {
            groups.entry(s.len()).or_default().push(i);
        }
        if groups.len() <= 1 {
            return self.encode_padded(tape, p, emb, seqs);
        }
        let mut parts = Vec::with_capacity(groups.len());
        let mut slot = vec![0; seqs.len()];
        let mut row = 0;
        for members in groups.values() {
            let group: Vec<Vec<usize>> = members.iter().map(|&i| seqs[i].clone()).collect();
            parts.push(self.encode_padded(tape, p, emb, &group)?);
            for &i in members {
                slot[i] = row;
                row += 1;
            }
        }
        let stacked = tape.concat_rows(&parts)?;
        tape.gather(stacked, &slot)
    }

    fn encode_padded(&self, tape: &mut Tape, p: &Binding, emb: &Embedding, seqs: &[Vec<usize>]) -> Result<Var> {
        let batch = SeqBatch::new(seqs)?;
        let b = seqs.len();
        let hs = self.lstm.hidden;
        let mut h = tape.constant(Tensor::zeros(&[b, hs]));
        let mut c = tape.constant(Tensor::zeros(&[b, hs]));
        for (ids, mask) in batch.steps.iter().zip(&batch.masks) {
            let x = emb.lookup(tape, p, ids)?;
            let (hn, cn) = self.lstm.step(tape, p, x, h, c)?;
            h = masked_update(tape, h, hn, mask.as_ref())?;
            c = masked_update(tape, c, cn, mask.as_ref())?;
        }
        Ok(h)
    }
}

/// Row layout for running a dialogue-level recurrence over utterance vectors
/// that were encoded as one flat batch.
#[derive(Clone, Debug)]
pub struct ContextLayout {
    pub steps: Vec<Vec<usize>>,
    pub masks: Vec<Option<Tensor>>,
}

impl ContextLayout {
    /// `lengths[b]` is the number of utterances in context `b`; contexts are
    /// laid out consecutively in the flat batch.
    pub fn new(lengths: &[usize]) -> Result<Self> {
        if lengths.is_empty() || lengths.contains(&0) {
            return Err(Error::invalid("empty dialogue context"));
        }
        let mut offsets = Vec::with_capacity(lengths.len());
        let mut acc = 0;
        for &l in lengths {
            offsets.push(acc);
            acc += l;
        }
        let max = *lengths.iter().max().unwrap();
        let mut steps = Vec::with_capacity(max);
        let mut masks = Vec::with_capacity(max);
        for t in 0..max {
            steps.push(
                lengths
                    .iter()
                    .zip(&offsets)
                    .map(|(&l, &o)| if t < l { o + t } else { o })
                    .collect(),
            );
            masks.push(step_mask(lengths, t, lengths.len()));
        }
        Ok(Self { steps, masks })
    }

    pub fn gather(&self, tape: &mut Tape, flat: Var) -> Result<Vec<Var>> {
        self.steps.iter().map(|ids| tape.gather(flat, ids)).collect()
    }
}

/// GRU over per-utterance vectors, returning the final state.
#[derive(Clone, Debug)]
pub struct DialogueEncoder {
    pub gru: GruCell,
}

impl DialogueEncoder {
    pub fn new(params: &mut ParamSet, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            gru: GruCell::new(params, &format!("{name}.gru"), input, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.gru.hidden
    }

    pub fn encode(&self, tape: &mut Tape, p: &Binding, steps: &[Var], masks: &[Option<Tensor>]) -> Result<Var> {
        let first = *steps.first().ok_or_else(|| Error::invalid("empty dialogue context"))?;
        let b = tape.value(first).rows();
        let mut h = tape.constant(Tensor::zeros(&[b, self.gru.hidden]));
        for (i, &x) in steps.iter().enumerate() {
            let hn = self.gru.step(tape, p, x, h)?;
            h = masked_update(tape, h, hn, masks.get(i).and_then(Option::as_ref))?;
        }
        Ok(h)
    }

    /// Encode flat utterance vectors grouped into contexts of the given lengths.
    pub fn encode_flat(&self, tape: &mut Tape, p: &Binding, flat: Var, lengths: &[usize]) -> Result<Var> {
        let layout = ContextLayout::new(lengths)?;
        let steps = layout.gather(tape, flat)?;
        self.encode(tape, p, &steps, &layout.masks)
    }
}

/// Teacher-forced output of [`Decoder::teacher_forced`].
#[derive(Clone, Debug)]
pub struct TeacherForced {
    /// `[steps * batch, vocab]`; row `t * batch + b` predicts `gold[b][t]`.
    pub logits: Var,
    pub targets: Vec<usize>,
    pub weights: Vec<f64>,
}

/// GRU decoder started from `tanh(W c + b)` of a context vector.
#[derive(Clone, Debug)]
pub struct Decoder {
    pub init: Linear,
    pub gru: GruCell,
    pub out: Linear,
}

impl Decoder {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        context_dim: usize,
        embed_dim: usize,
        hidden: usize,
        vocab: usize,
        rng: &mut Rng,
    ) -> Self {
        let init = Linear::new(params, &format!("{name}.init"), context_dim, hidden, rng);
        Self::with_init(params, name, init, embed_dim, hidden, vocab, rng)
    }

    /// Build around an already constructed initial-state projection.
    pub fn with_init(
        params: &mut ParamSet,
        name: &str,
        init: Linear,
        embed_dim: usize,
        hidden: usize,
        vocab: usize,
        rng: &mut Rng,
    ) -> Self {
        assert_eq!(init.output, hidden);
        let gru = GruCell::new(params, &format!("{name}.gru"), embed_dim, hidden, rng);
        let out = Linear::new(params, &format!("{name}.out"), hidden, vocab, rng);
        Self { init, gru, out }
    }

    pub fn context_dim(&self) -> usize {
        self.init.input
    }

    pub fn vocab(&self) -> usize {
        self.out.output
    }

    pub fn initial_state(&self, tape: &mut Tape, p: &Binding, context: Var) -> Result<Var> {
        let d = tape.value(context).cols();
        if d != self.init.input {
            return Err(Error::shape("decoder init", &[self.init.input], tape.shape(context)));
        }
        let z = self.init.forward(tape, p, context)?;
        Ok(tape.tanh(z))
    }

    /// Logits for every gold position, feeding `BOS, gold[..n-1]` as inputs.
    pub fn teacher_forced(
        &self,
        tape: &mut Tape,
        p: &Binding,
        emb: &Embedding,
        h0: Var,
        gold: &[Vec<usize>],
    ) -> Result<TeacherForced> {
        let batch = SeqBatch::new(gold)?;
        let b = gold.len();
        if tape.value(h0).rows() != b {
            return Err(Error::shape("teacher_forced", tape.shape(h0), &[b]));
        }
        let mut h = h0;
        let mut states = Vec::with_capacity(batch.steps.len());
        let mut prev: Vec<usize> = vec![BOS; b];
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        for (t, ids) in batch.steps.iter().enumerate() {
            let x = emb.lookup(tape, p, &prev)?;
            let hn = self.gru.step(tape, p, x, h)?;
            h = masked_update(tape, h, hn, batch.masks[t].as_ref())?;
            states.push(h);
            for (bi, &id) in ids.iter().enumerate() {
                let valid = t < batch.lengths[bi];
                targets.push(if valid { id } else { 0 });
                weights.push(if valid { 1.0 } else { 0.0 });
            }
            prev = ids.clone();
        }
        let hs = tape.concat_rows(&states)?;
        let logits = self.out.forward(tape, p, hs)?;
        Ok(TeacherForced {
            logits,
            targets,
            weights,
        })
    }

    /// Summed token negative log-likelihood of `gold` over the batch.
    pub fn nll(&self, tape: &mut Tape, p: &Binding, emb: &Embedding, h0: Var, gold: &[Vec<usize>]) -> Result<Var> {
        let tf = self.teacher_forced(tape, p, emb, h0, gold)?;
        tape.cross_entropy(tf.logits, &tf.targets, &tf.weights)
    }

    /// Greedy decoding from `h0` (`[batch, hidden]`). Each output ends with
    /// `EOS` unless `max_len` was reached first.
    pub fn greedy(
        &self,
        tape: &mut Tape,
        p: &Binding,
        emb: &Embedding,
        h0: Var,
        max_len: usize,
    ) -> Result<Vec<Vec<usize>>> {
        if max_len == 0 {
            return Err(Error::invalid("max_len must be positive"));
        }
        let b = tape.value(h0).rows();
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); b];
        let mut done = vec![false; b];
        let mut prev = vec![BOS; b];
        let mut h = h0;
        for _ in 0..max_len {
            let x = emb.lookup(tape, p, &prev)?;
            h = self.gru.step(tape, p, x, h)?;
            let logits = self.out.forward(tape, p, h)?;
            let lv = tape.value(logits);
            for bi in 0..b {
                if done[bi] {
                    continue;
                }
                let tok = kernels::argmax(lv.row_slice(bi));
                out[bi].push(tok);
                prev[bi] = tok;
                if tok == EOS {
                    done[bi] = true;
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(out)
    }
}
