use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::{LatentBatch, LatentModel};
use crate::corpus::{dialogue_utterances, Dialogue, Triple};
use crate::error::{Error, Result};
use crate::neural::masked_update;
use crate::rng::Rng;
use crate::tensor::{clip_global_norm, kernels, AdamConfig, AdamState, Binding, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Epochs of next-code prediction for the dialogue-level encoder.
    pub dialogue_epochs: usize,
    pub clip_norm: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            adam: AdamConfig::default(),
            dialogue_epochs: 5,
            clip_norm: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainLogEntry {
    pub phase: String,
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub components: BTreeMap<String, f64>,
}

fn batches(n: usize, size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Optimize the utterance-level objective over `triples`.
pub fn pretrain_utterances(
    model: &mut LatentModel,
    triples: &[Triple],
    cfg: &PretrainConfig,
    rng: &mut Rng,
) -> Result<Vec<PretrainLogEntry>> {
    pretrain_utterances_until(model, triples, cfg, rng, |_, _| false)
}

/// As [`pretrain_utterances`], calling `stop(model, epochs_done)` after every
/// epoch and returning early once it says so.
pub fn pretrain_utterances_until<F>(
    model: &mut LatentModel,
    triples: &[Triple],
    cfg: &PretrainConfig,
    rng: &mut Rng,
    mut stop: F,
) -> Result<Vec<PretrainLogEntry>>
where
    F: FnMut(&LatentModel, usize) -> bool,
{
    if triples.is_empty() {
        return Err(Error::invalid("no utterances to pre-train on"));
    }
    let all = model.batch_from_triples(triples);
    let mut adam = AdamState::new(cfg.adam, &model.params).with_precision(model.precision);
    let mut log = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        for idx in batches(all.len(), cfg.batch_size, rng) {
            let batch = all.select(&idx);
            let noise = model.sample_noise(batch.len(), rng);
            let tau = model.config.latent.tau_at(step);
            let (loss, nll, kl, grads) = {
                let mut tape = Tape::with_precision(model.precision);
                let p = model.params.bind(&mut tape, true);
                let l = model.loss(&mut tape, &p, &batch, &noise, tau)?;
                let v = tape.value(l.total).item();
                if !v.is_finite() {
                    return Err(Error::Divergence(step));
                }
                tape.backward(l.total)?;
                (v, l.nll, l.kl, p.grads(&tape))
            };
            let mut grads = grads;
            if cfg.clip_norm > 0.0 {
                clip_global_norm(&mut grads, cfg.clip_norm);
            }
            adam.step(&mut model.params, &grads)?;
            log.push(PretrainLogEntry {
                phase: "utterance".into(),
                epoch,
                step,
                loss,
                components: BTreeMap::from([("nll".into(), nll), ("kl".into(), kl), ("tau".into(), tau)]),
            });
            step += 1;
        }
        if stop(model, epoch + 1) {
            break;
        }
    }
    Ok(log)
}

/// Per-dialogue constant inputs for next-summary prediction.
struct DialogueSeq {
    summaries: Tensor,
    codes: Vec<Vec<usize>>,
}

fn dialogue_sequences(model: &LatentModel, dialogues: &[Dialogue]) -> Result<Vec<DialogueSeq>> {
    let mut out = Vec::with_capacity(dialogues.len());
    for d in dialogues {
        let inputs = model.context_inputs(&d.domain, &dialogue_utterances(d));
        let mut tape = Tape::with_precision(model.precision);
        let p = model.params.bind(&mut tape, false);
        let s = model.summary(&mut tape, &p, &inputs)?;
        let summaries = tape.value(s).clone();
        let codes = if model.variant().is_discrete() {
            let (m, k) = (model.m(), model.k());
            (0..inputs.len())
                .map(|r| {
                    let row = summaries.row_slice(r);
                    (0..m).map(|i| kernels::argmax(&row[i * k..(i + 1) * k])).collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        out.push(DialogueSeq { summaries, codes });
    }
    Ok(out)
}

/// Next-summary prediction loss for a batch of dialogues, averaged over
/// predicted positions. Returns `None` when no dialogue has two utterances.
fn next_summary_loss(model: &LatentModel, tape: &mut Tape, p: &Binding, seqs: &[&DialogueSeq]) -> Result<Option<Var>> {
    let lengths: Vec<usize> = seqs.iter().map(|s| s.summaries.rows()).collect();
    let b = seqs.len();
    let max = *lengths.iter().max().unwrap_or(&0);
    let lw = model.config.latent_width();
    let (m, k) = (model.m(), model.k());
    let predictions: usize = lengths.iter().map(|&l| l.saturating_sub(1)).sum();
    if predictions == 0 {
        return Ok(None);
    }
    let gru = &model.dialogue.gru;
    let mut h = tape.constant(Tensor::zeros(&[b, gru.hidden]));
    let mut terms = Vec::new();
    for t in 0..max - 1 {
        let mut x = vec![0.0; b * lw];
        for (bi, s) in seqs.iter().enumerate() {
            if t < lengths[bi] {
                x[bi * lw..(bi + 1) * lw].copy_from_slice(s.summaries.row_slice(t));
            }
        }
        let xv = tape.constant(Tensor::matrix(b, lw, x));
        let hn = gru.step(tape, p, xv, h)?;
        let mask = Tensor::matrix(b, 1, lengths.iter().map(|&l| if t < l { 1.0 } else { 0.0 }).collect());
        h = masked_update(tape, h, hn, Some(&mask))?;
        let pred = model.predictor.forward(tape, p, h)?;
        let valid: Vec<bool> = lengths.iter().map(|&l| t + 1 < l).collect();
        if !valid.iter().any(|&v| v) {
            continue;
        }
        if model.variant().is_discrete() {
            let logits = tape.reshape(pred, &[b * m, k])?;
            let mut targets = Vec::with_capacity(b * m);
            let mut weights = Vec::with_capacity(b * m);
            for (bi, s) in seqs.iter().enumerate() {
                for i in 0..m {
                    targets.push(if valid[bi] { s.codes[t + 1][i] } else { 0 });
                    weights.push(if valid[bi] { 1.0 } else { 0.0 });
                }
            }
            terms.push(tape.cross_entropy(logits, &targets, &weights)?);
        } else {
            let mut target = vec![0.0; b * lw];
            for (bi, s) in seqs.iter().enumerate() {
                if valid[bi] {
                    target[bi * lw..(bi + 1) * lw].copy_from_slice(s.summaries.row_slice(t + 1));
                }
            }
            let tv = tape.constant(Tensor::matrix(b, lw, target));
            let d = tape.sub(pred, tv)?;
            let vm = tape.constant(Tensor::matrix(
                b,
                1,
                valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
            ));
            let d = tape.mul(d, vm)?;
            let sq = tape.mul(d, d)?;
            terms.push(tape.sum(sq));
        }
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    Ok(Some(tape.scale(total, 1.0 / predictions as f64)))
}

/// Train the dialogue-level encoder to predict each next utterance's latent
/// summary from the running dialogue state. The recognition network is held
/// fixed: its outputs enter as constants.
pub fn pretrain_dialogue(
    model: &mut LatentModel,
    dialogues: &[Dialogue],
    cfg: &PretrainConfig,
    rng: &mut Rng,
) -> Result<Vec<PretrainLogEntry>> {
    let seqs = dialogue_sequences(model, dialogues)?;
    let mut adam = AdamState::new(cfg.adam, &model.params).with_precision(model.precision);
    let mut log = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.dialogue_epochs {
        for idx in batches(seqs.len(), cfg.batch_size, rng) {
            let batch: Vec<&DialogueSeq> = idx.iter().map(|&i| &seqs[i]).collect();
            let mut tape = Tape::with_precision(model.precision);
            let p = model.params.bind(&mut tape, true);
            let Some(l) = next_summary_loss(model, &mut tape, &p, &batch)? else {
                continue;
            };
            let v = tape.value(l).item();
            if !v.is_finite() {
                return Err(Error::Divergence(step));
            }
            tape.backward(l)?;
            let mut grads = p.grads(&tape);
            if cfg.clip_norm > 0.0 {
                clip_global_norm(&mut grads, cfg.clip_norm);
            }
            adam.step(&mut model.params, &grads)?;
            log.push(PretrainLogEntry {
                phase: "dialogue".into(),
                epoch,
                step,
                loss: v,
                components: BTreeMap::new(),
            });
            step += 1;
        }
    }
    Ok(log)
}

/// Full pre-training: utterance objective, then the dialogue encoder.
pub fn pretrain(
    model: &mut LatentModel,
    dialogues: &[Dialogue],
    cfg: &PretrainConfig,
    rng: &mut Rng,
) -> Result<Vec<PretrainLogEntry>> {
    let triples = crate::corpus::utterance_triples(dialogues);
    let mut log = pretrain_utterances(model, &triples, cfg, rng)?;
    log.extend(pretrain_dialogue(model, dialogues, cfg, rng)?);
    Ok(log)
}

/// One line of the code-assignment report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeAssignment {
    pub domain: String,
    pub utterance: String,
    pub code: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
}

pub fn assign_codes(model: &LatentModel, triples: &[Triple]) -> Result<Vec<CodeAssignment>> {
    let mut out = Vec::with_capacity(triples.len());
    for chunk in triples.chunks(256) {
        let batch: LatentBatch = model.batch_from_triples(chunk);
        let codes = model.extract_codes(&batch.inputs)?;
        for (t, code) in chunk.iter().zip(codes) {
            out.push(CodeAssignment {
                domain: t.domain.clone(),
                utterance: t.mid.tokens.join(" "),
                code,
                intent: t.intent.clone(),
            });
        }
    }
    Ok(out)
}

/// Fraction of items whose label is the majority label of their cluster.
pub fn cluster_purity<C: Ord + Clone, L: Ord + Clone>(clusters: &[C], labels: &[L]) -> f64 {
    if clusters.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<C, BTreeMap<L, usize>> = BTreeMap::new();
    for (c, l) in clusters.iter().zip(labels) {
        *counts.entry(c.clone()).or_default().entry(l.clone()).or_default() += 1;
    }
    let hit: usize = counts.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    hit as f64 / clusters.len() as f64
}
