use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::{Encoded, EncodedDescription, FsdgModel};
use crate::corpus::{sample_count, DescriptionExample, TrainingExample};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{clip_global_norm, AdamConfig, AdamState, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_steps: usize,
    /// Stop after this many passes over the source pairs; 0 means no limit.
    pub max_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Every `mix_every`-th step trains on a seed-set batch instead of a
    /// source batch. 0 disables seed batches.
    pub mix_every: usize,
    /// Held-out source evaluation period, in steps. 0 disables early stopping.
    pub eval_every: usize,
    pub patience: usize,
    pub heldout_fraction: f64,
    pub heldout_max: usize,
    pub clip_norm: f64,
    /// Add the domain-description objective to every step.
    pub description_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_steps: 5000,
            max_epochs: 0,
            batch_size: 32,
            adam: AdamConfig::default(),
            mix_every: 5,
            eval_every: 100,
            patience: 5,
            heldout_fraction: 0.1,
            heldout_max: 200,
            clip_norm: 5.0,
            description_loss: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return Err(Error::Config("heldout_fraction must lie in [0, 1)".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: usize,
    /// `source` or `seed`.
    pub batch: String,
    pub loss: f64,
    pub components: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heldout_nll: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub best_step: Option<usize>,
    pub best_heldout_nll: Option<f64>,
    pub stopped_early: bool,
    pub source_examples: usize,
    pub heldout_examples: usize,
    pub seed_examples: usize,
}

/// Cycles through shuffled epochs of `0..n`.
struct Batcher {
    n: usize,
    order: Vec<usize>,
    pos: usize,
    epochs: usize,
}

impl Batcher {
    fn new(n: usize) -> Self {
        Self {
            n,
            order: Vec::new(),
            pos: 0,
            epochs: 0,
        }
    }

    /// Passes completed over the data.
    fn completed(&self) -> usize {
        if self.pos == self.order.len() {
            self.epochs
        } else {
            self.epochs.saturating_sub(1)
        }
    }

    fn next(&mut self, size: usize, rng: &mut Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(size.min(self.n));
        while out.len() < size.min(self.n) {
            if self.pos == self.order.len() {
                self.order = (0..self.n).collect();
                rng.shuffle(&mut self.order);
                self.pos = 0;
                self.epochs += 1;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Mean per-example response NLL over `data`, in batches.
pub fn evaluate_nll(model: &FsdgModel, data: &[Encoded], batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("no examples to evaluate"));
    }
    let mut total = 0.0;
    for chunk in data.chunks(batch_size.max(1)) {
        let mut tape = Tape::with_precision(model.precision);
        let p = model.params.bind(&mut tape, false);
        let aux: Vec<_> = if model.config.fine_tune_latent {
            model.aux.iter().map(|m| m.params.bind(&mut tape, false)).collect()
        } else {
            Vec::new()
        };
        let refs: Vec<&Encoded> = chunk.iter().collect();
        let c = model.combined_encode(&mut tape, &p, &aux, &refs)?;
        let h0 = model.decoder.initial_state(&mut tape, &p, c)?;
        let gold: Vec<Vec<usize>> = chunk.iter().map(|e| e.response.clone()).collect();
        let nll = model.decoder.nll(&mut tape, &p, &model.emb, h0, &gold)?;
        total += tape.value(nll).item();
    }
    Ok(total / data.len() as f64)
}

/// Multi-task training on source pairs and target seed pairs.
///
/// A fraction of the source pairs is held out for early stopping; the best
/// held-out parameters are restored at the end.
pub fn train(
    model: &mut FsdgModel,
    source: &[TrainingExample],
    seeds: &[TrainingExample],
    descriptions: &[DescriptionExample],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<(Vec<TrainLogEntry>, TrainSummary)> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::invalid("no source training pairs"));
    }
    let mut order: Vec<usize> = (0..source.len()).collect();
    rng.shuffle(&mut order);
    let held = if cfg.eval_every > 0 && source.len() > 1 {
        sample_count(cfg.heldout_fraction, source.len())
            .min(cfg.heldout_max)
            .min(source.len() - 1)
    } else {
        0
    };
    let (held_idx, train_idx) = order.split_at(held);
    let pick = |idx: &[usize]| -> Vec<TrainingExample> { idx.iter().map(|&i| source[i].clone()).collect() };
    let train_src = model.encode_examples(&pick(train_idx))?;
    let heldout = model.encode_examples(&pick(held_idx))?;
    let seed_enc = model.encode_examples(seeds)?;
    let desc_enc: Vec<EncodedDescription> = if cfg.description_loss {
        if descriptions.is_empty() {
            return Err(Error::Config(
                "domain-description loss enabled without annotated examples".into(),
            ));
        }
        model.encode_descriptions(descriptions)?
    } else {
        Vec::new()
    };
    log::info!(
        "training {}: {} source pairs ({} held out), {} seed pairs",
        model.variant().name(),
        train_src.len(),
        heldout.len(),
        seed_enc.len()
    );

    let mut adam = AdamState::new(cfg.adam, &model.params).with_precision(model.precision);
    let mut aux_adam: Vec<AdamState> = if model.config.fine_tune_latent {
        model
            .aux
            .iter()
            .map(|m| AdamState::new(cfg.adam, &m.params).with_precision(model.precision))
            .collect()
    } else {
        Vec::new()
    };
    let mut src_batches = Batcher::new(train_src.len());
    let mut seed_batches = Batcher::new(seed_enc.len());
    let mut desc_batches = Batcher::new(desc_enc.len());
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Vec<Tensor>, Vec<Vec<Tensor>>)> = None;
    let mut bad_evals = 0;
    let mut stopped_early = false;
    let mut steps = 0;

    for step in 0..cfg.max_steps {
        let use_seed = !seed_enc.is_empty() && cfg.mix_every > 0 && (step + 1) % cfg.mix_every == 0;
        let batch: Vec<&Encoded> = if use_seed {
            seed_batches
                .next(cfg.batch_size, rng)
                .into_iter()
                .map(|i| &seed_enc[i])
                .collect()
        } else {
            src_batches
                .next(cfg.batch_size, rng)
                .into_iter()
                .map(|i| &train_src[i])
                .collect()
        };
        let dd_batch: Vec<&EncodedDescription> = desc_batches
            .next(cfg.batch_size, rng)
            .into_iter()
            .map(|i| &desc_enc[i])
            .collect();

        let mut tape = Tape::with_precision(model.precision);
        let p = model.params.bind(&mut tape, true);
        let aux = model.bind_aux(&mut tape);
        let l = model.dialogue_loss(&mut tape, &p, &aux, &batch)?;
        let mut components = BTreeMap::from([("nll".to_string(), l.nll), ("distance".to_string(), l.distance)]);
        let mut total = l.total;
        if !dd_batch.is_empty() {
            let d = model.domain_description_loss(&mut tape, &p, &dd_batch)?;
            components.insert("dd_nll".into(), d.nll);
            components.insert("dd_distance".into(), d.distance);
            total = tape.add(total, d.total)?;
        }
        let loss = tape.value(total).item();
        if !loss.is_finite() {
            return Err(Error::Divergence(step));
        }
        tape.backward(total)?;
        let mut grads = p.grads(&tape);
        let mut aux_grads: Vec<Vec<Tensor>> = aux.iter().map(|b| b.grads(&tape)).collect();
        drop(tape);
        if cfg.clip_norm > 0.0 {
            clip_global_norm(&mut grads, cfg.clip_norm);
            for g in &mut aux_grads {
                clip_global_norm(g, cfg.clip_norm);
            }
        }
        adam.step(&mut model.params, &grads)?;
        for ((st, m), g) in aux_adam.iter_mut().zip(&mut model.aux).zip(&aux_grads) {
            st.step(&mut m.params, g)?;
        }
        steps = step + 1;

        let mut heldout_nll = None;
        if cfg.eval_every > 0 && !heldout.is_empty() && steps % cfg.eval_every == 0 {
            let h = evaluate_nll(model, &heldout, cfg.batch_size)?;
            if !h.is_finite() {
                return Err(Error::Divergence(step));
            }
            heldout_nll = Some(h);
            if best.as_ref().map_or(true, |b| h < b.0) {
                let aux_vals = model.aux.iter().map(|m| m.params.values().to_vec()).collect();
                best = Some((h, steps, model.params.values().to_vec(), aux_vals));
                bad_evals = 0;
            } else {
                bad_evals += 1;
            }
        }
        log.push(TrainLogEntry {
            step,
            batch: if use_seed { "seed" } else { "source" }.into(),
            loss,
            components,
            heldout_nll,
        });
        if cfg.patience > 0 && bad_evals >= cfg.patience {
            stopped_early = true;
            break;
        }
        if cfg.max_epochs > 0 && src_batches.completed() >= cfg.max_epochs {
            break;
        }
    }

    let (best_step, best_heldout_nll) = match best {
        Some((h, s, vals, aux_vals)) => {
            restore(&mut model.params, vals)?;
            for (m, v) in model.aux.iter_mut().zip(aux_vals) {
                restore(&mut m.params, v)?;
            }
            (Some(s), Some(h))
        }
        None => (None, None),
    };
    let summary = TrainSummary {
        steps,
        best_step,
        best_heldout_nll,
        stopped_early,
        source_examples: train_src.len(),
        heldout_examples: heldout.len(),
        seed_examples: seed_enc.len(),
    };
    Ok((log, summary))
}

fn restore(params: &mut crate::tensor::ParamSet, values: Vec<Tensor>) -> Result<()> {
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    params.load_values(names.iter().map(String::as_str).zip(values))
}
