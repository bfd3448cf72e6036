//! Training and evaluation steps shared by the commands.

use std::collections::BTreeMap;

use fsdg_core::corpus::{
    build_vocabulary, candidate_pairs, description_examples, sample_seed_set, Dialogue, LexiconEntry, Role, Speaker,
    TrainingExample, Turn, Vocabulary,
};
use fsdg_core::eval::{score_predictions, BleuConfig, EntityLexicon, Prediction, RunScores};
use fsdg_core::fsdg::{train, FsdgModel, TrainLogEntry, TrainSummary};
use fsdg_core::latent::{pretrain, LaedConfig, LatentModel, LatentVariant, PretrainLogEntry};
use fsdg_core::rng::Rng;
use fsdg_core::{Error, Result};

use crate::checkpoint::round_for_storage;
use crate::config::RunConfig;

/// Single-turn stand-ins for seed pairs, so that only tokens the seed set
/// actually shows enter the vocabulary.
fn seed_dialogues(seeds: &[TrainingExample]) -> Vec<Dialogue> {
    seeds
        .iter()
        .map(|s| {
            let mut turns: Vec<Turn> = s
                .context
                .iter()
                .filter(|u| u.role != Role::Kb)
                .map(|u| {
                    let sp = if u.role == Role::Usr {
                        Speaker::Usr
                    } else {
                        Speaker::Sys
                    };
                    Turn::new(sp, u.tokens.join(" "))
                })
                .collect();
            turns.push(Turn::new(Speaker::Sys, s.response.join(" ")));
            Dialogue {
                domain: s.domain.clone(),
                kb: s.kb.clone(),
                turns,
            }
        })
        .collect()
}

pub fn generator_vocabulary(source: &[Dialogue], seeds: &[TrainingExample], min_freq: usize) -> Result<Vocabulary> {
    let pseudo = seed_dialogues(seeds);
    build_vocabulary(&[source, &pseudo], min_freq)
}

pub fn draw_seed_set(cfg: &RunConfig, target: &[Dialogue], rng: &mut Rng) -> Result<Vec<TrainingExample>> {
    sample_seed_set(target, cfg.seed_fraction, cfg.sample_unit, rng)
}

/// Pre-train one latent model on `transfer` and round it to storage precision.
pub fn pretrain_latent(
    cfg: &RunConfig,
    variant: LatentVariant,
    transfer: &[Dialogue],
    rng: &mut Rng,
) -> Result<(LatentModel, Vec<PretrainLogEntry>)> {
    let vocab = build_vocabulary(&[transfer], cfg.min_freq)?;
    let lc = LaedConfig {
        variant,
        ..cfg.latent.clone()
    };
    let mut model = LatentModel::new(lc, vocab, rng)?;
    let log = pretrain(&mut model, transfer, &cfg.pretrain, rng)?;
    round_for_storage(&mut model.params);
    Ok((model, log))
}

pub struct Trained {
    pub model: FsdgModel,
    pub log: Vec<TrainLogEntry>,
    pub summary: TrainSummary,
}

/// Build and train a response generator on source dialogues plus seed pairs.
pub fn train_generator(
    cfg: &RunConfig,
    source: &[Dialogue],
    seeds: &[TrainingExample],
    latent: Vec<LatentModel>,
    rng: &mut Rng,
) -> Result<Trained> {
    if source.is_empty() {
        return Err(Error::InvalidArgument("no source dialogues".into()));
    }
    let vocab = generator_vocabulary(source, seeds, cfg.min_freq)?;
    let mut model = FsdgModel::new(cfg.model.clone(), vocab, latent, rng)?;
    let pairs = candidate_pairs(source);
    let descriptions = if cfg.train.description_loss {
        let (ex, missing) = description_examples(source);
        if missing > 0 {
            return Err(Error::InvalidArgument(format!(
                "{missing} system turns lack annotations"
            )));
        }
        ex
    } else {
        Vec::new()
    };
    let (log, summary) = train(&mut model, &pairs, seeds, &descriptions, &cfg.train, rng)?;
    round_for_storage(&mut model.params);
    Ok(Trained { model, log, summary })
}

/// Greedy responses for every system turn of `test`.
pub fn predict(model: &FsdgModel, test: &[Dialogue], max_len: usize, batch: usize) -> Result<Vec<Prediction>> {
    let pairs = candidate_pairs(test);
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(batch.max(1)) {
        let enc = chunk
            .iter()
            .map(|p| model.encode_context(&p.domain, &p.context))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<_> = enc.iter().collect();
        let gen = model.generate_encoded(&refs, max_len)?;
        for (p, g) in chunk.iter().zip(gen) {
            out.push(Prediction {
                context_id: format!("{}:{}", p.dialogue, p.turn),
                prediction: g.join(" "),
                reference: p.response.join(" "),
                domain: Some(p.domain.clone()),
            });
        }
    }
    Ok(out)
}

/// Scores per domain of a prediction list.
pub fn score_by_domain(
    preds: &[Prediction],
    lexicon: Option<&[LexiconEntry]>,
    bleu: &BleuConfig,
) -> Result<BTreeMap<String, RunScores>> {
    let lex = lexicon.map(EntityLexicon::from_entries);
    let mut groups: BTreeMap<String, Vec<Prediction>> = BTreeMap::new();
    for p in preds {
        groups
            .entry(p.domain.clone().unwrap_or_default())
            .or_default()
            .push(p.clone());
    }
    groups
        .into_iter()
        .map(|(d, ps)| Ok((d, score_predictions(&ps, lex.as_ref(), bleu)?)))
        .collect()
}

/// Seed sampling and training streams of protocol run `run`.
pub fn run_rngs(seed: u64, run: usize) -> (Rng, Rng) {
    (Rng::derive(seed, 2 * run as u64), Rng::derive(seed, 2 * run as u64 + 1))
}

/// One protocol run: sample a seed set, then train.
pub fn protocol_run(
    cfg: &RunConfig,
    source: &[Dialogue],
    target: &[Dialogue],
    latent: Vec<LatentModel>,
    run: usize,
) -> Result<(Vec<TrainingExample>, Trained)> {
    let (mut sample_rng, mut train_rng) = run_rngs(cfg.seed, run);
    let seeds = draw_seed_set(cfg, target, &mut sample_rng)?;
    let trained = train_generator(cfg, source, &seeds, latent, &mut train_rng)?;
    Ok((seeds, trained))
}
