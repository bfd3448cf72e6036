//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Extra arguments select criteria by number.

#[path = "../common/mod.rs"]
mod common;

mod aggregation;
mod determinism;
mod gradients;
mod oracles;
mod transfer;

use std::process::ExitCode;
use std::time::Instant;

use fsdg_core::corpus::{
    build_vocabulary, candidate_pairs, generate_synthetic_corpus, utterance_triples, SynthSpec, TrainingExample, Triple,
};
use fsdg_core::fsdg::{train, FsdgConfig, FsdgModel, TrainConfig};
use fsdg_core::latent::{
    cluster_purity, posterior_diagnostics, pretrain, pretrain_utterances_until, LaedConfig, LatentConfig, LatentModel,
    LatentVariant, PretrainConfig,
};
use fsdg_core::rng::Rng;
use fsdg_core::tensor::{AdamConfig, Tensor};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn spec(json: &str) -> SynthSpec {
    serde_json::from_str(json).expect("fixture spec parses")
}

// 3. Overfit capability.

const OVERFIT_ACCURACY: f64 = 0.95;
const OVERFIT_EPOCHS: usize = 500;

fn overfit_spec() -> SynthSpec {
    spec(
        r#"{"domains": [{"name": "toy", "kind": "transfer", "dialogues": 32,
        "slots": {"colour": ["red", "blue", "green", "black"], "thing": ["car", "hat", "cup", "bag"]},
        "intents": [
          {"name": "ask", "user": ["i want a {colour} {thing}", "do you sell a {thing}", "show me {colour} things"]},
          {"name": "tell", "system": ["we have a {colour} {thing}", "the {thing} costs ten dollars", "sorry no {colour} {thing}"]}
        ],
        "flows": [["ask", "tell"]]}]}"#,
    )
}

/// Fraction of target positions (words then EOS) the greedy reconstruction
/// gets right.
fn token_accuracy(model: &LatentModel, triples: &[Triple]) -> f64 {
    let batch = model.batch_from_triples(triples);
    let max_len = batch.targets[0].iter().map(Vec::len).max().unwrap_or(1);
    let out = model.reconstruct(&batch.inputs, 0, max_len).unwrap();
    let (mut hit, mut total) = (0usize, 0usize);
    for (gold, got) in batch.targets[0].iter().zip(&out) {
        total += gold.len();
        hit += gold.iter().zip(got).filter(|(a, b)| a == b).count();
    }
    hit as f64 / total as f64
}

/// Returns (final accuracy, epoch the threshold was first met, utterances, vocab size).
fn divae_overfit() -> (f64, Option<usize>, usize, usize) {
    let corpus = generate_synthetic_corpus(&overfit_spec(), &mut Rng::seed(3)).unwrap();
    let triples = utterance_triples(&corpus.transfer);
    let vocab = build_vocabulary(&[&corpus.transfer], 1).unwrap();
    let v = vocab.len();
    let cfg = LaedConfig {
        variant: LatentVariant::DiVae,
        latent: LatentConfig {
            tau_final: 0.3,
            anneal_steps: 1000,
            ..LatentConfig::default()
        },
        embed_dim: 64,
        utt_hidden: 128,
        dec_hidden: 128,
        ctx_hidden: 16,
    };
    let mut rng = Rng::seed(11);
    let mut model = LatentModel::new(cfg, vocab, &mut rng).unwrap();
    let pc = PretrainConfig {
        epochs: OVERFIT_EPOCHS,
        batch_size: 32,
        adam: AdamConfig {
            lr: 0.003,
            ..AdamConfig::default()
        },
        dialogue_epochs: 0,
        clip_norm: 5.0,
    };
    let mut reached = None;
    pretrain_utterances_until(&mut model, &triples, &pc, &mut rng, |m, epoch| {
        let hit = token_accuracy(m, &triples) >= OVERFIT_ACCURACY;
        if hit {
            reached = Some(epoch);
        }
        hit
    })
    .unwrap();
    (token_accuracy(&model, &triples), reached, triples.len(), v)
}

/// Ten target pairs with pairwise distinct contexts; returns how many pairs
/// the trained generator reproduces exactly.
fn fsdg_memorize() -> (usize, usize) {
    let corpus = generate_synthetic_corpus(
        &spec(include_str!("../../../../fixtures/toy_spec.json")),
        &mut Rng::seed(2),
    )
    .unwrap();
    let target = &corpus.targets[0].train;
    let mut pairs: Vec<TrainingExample> = Vec::new();
    for p in candidate_pairs(target) {
        if pairs.len() < MEMORIZE_PAIRS && !pairs.iter().any(|q| q.context == p.context && q.kb == p.kb) {
            pairs.push(p);
        }
    }
    let vocab = build_vocabulary(&[target], 1).unwrap();
    let cfg = FsdgConfig {
        embed_dim: 32,
        utt_hidden: 64,
        ctx_hidden: 64,
        dec_hidden: 64,
        ..FsdgConfig::default()
    };
    let mut model = FsdgModel::new(cfg, vocab, vec![], &mut Rng::seed(0)).unwrap();
    let tc = TrainConfig {
        max_steps: MEMORIZE_STEPS,
        batch_size: MEMORIZE_PAIRS,
        eval_every: 0,
        ..TrainConfig::default()
    };
    train(&mut model, &pairs, &[], &[], &tc, &mut Rng::seed(0)).unwrap();
    let exact = pairs
        .iter()
        .filter(|p| model.generate_response(&p.context, &p.domain, 30).unwrap() == p.response)
        .count();
    (exact, pairs.len())
}

const MEMORIZE_PAIRS: usize = 10;
const MEMORIZE_STEPS: usize = 2000;

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let (acc, reached, n, v) = divae_overfit();
    let secs = t.elapsed().as_secs_f64();
    let vae_ok = n == 64 && v <= 60 && reached.is_some() && secs < 300.0;
    let (exact, pairs) = fsdg_memorize();
    let fsdg_ok = pairs == MEMORIZE_PAIRS && exact == pairs;
    let when = reached.map_or(format!("not reached in {OVERFIT_EPOCHS}"), |e| {
        format!("reached at epoch {e}")
    });
    outcome(
        vae_ok && fsdg_ok,
        format!(
            "DI-VAE {n} utterances, vocab {v}: token accuracy {acc:.3}, {when}, {secs:.0}s; \
             FSDG reproduces {exact}/{pairs} pairs after {MEMORIZE_STEPS} steps"
        ),
    )
}

// 4. Latent separation.

const PURITY_MIN: f64 = 0.7;
const DISTINCT_MIN: f64 = 6.0;
const MI_MIN: f64 = 1.0;
const SEPARATION_SEEDS: u64 = 5;

fn separation_config() -> LaedConfig {
    LaedConfig {
        variant: LatentVariant::DiVst,
        latent: LatentConfig {
            m: 1,
            k: 10,
            code_dim: 16,
            tau_final: 0.3,
            anneal_steps: 600,
            ..LatentConfig::default()
        },
        embed_dim: 16,
        utt_hidden: 32,
        dec_hidden: 32,
        ctx_hidden: 16,
    }
}

fn separation_run(seed: u64) -> (f64, usize, f64) {
    let corpus = generate_synthetic_corpus(
        &spec(include_str!("../../../../fixtures/intents.json")),
        &mut Rng::seed(seed),
    )
    .unwrap();
    let triples = utterance_triples(&corpus.transfer);
    let vocab = build_vocabulary(&[&corpus.transfer], 1).unwrap();
    let mut rng = Rng::derive(seed, 1);
    let mut model = LatentModel::new(separation_config(), vocab, &mut rng).unwrap();
    let pc = PretrainConfig {
        epochs: 40,
        batch_size: 32,
        adam: AdamConfig {
            lr: 0.005,
            ..AdamConfig::default()
        },
        dialogue_epochs: 0,
        clip_norm: 5.0,
    };
    pretrain(&mut model, &corpus.transfer, &pc, &mut rng).unwrap();
    let batch = model.batch_from_triples(&triples);
    let codes = model.extract_codes(&batch.inputs).unwrap();
    let labels: Vec<String> = triples.iter().map(|t| t.intent.clone().unwrap()).collect();
    let purity = cluster_purity(&codes, &labels);
    let distinct = codes.iter().collect::<std::collections::BTreeSet<_>>().len();
    let probs: Tensor = model.posterior_probs(&batch.inputs).unwrap();
    let (_, mi) = posterior_diagnostics(&probs, model.m(), model.k()).unwrap();
    (purity, distinct, mi)
}

fn criterion_4() -> Outcome {
    let runs: Vec<(f64, usize, f64)> = (0..SEPARATION_SEEDS).map(separation_run).collect();
    let n = runs.len() as f64;
    let purity = runs.iter().map(|r| r.0).sum::<f64>() / n;
    let distinct = runs.iter().map(|r| r.1 as f64).sum::<f64>() / n;
    let mi = runs.iter().map(|r| r.2).sum::<f64>() / n;
    let per: Vec<String> = runs.iter().map(|r| format!("{:.2}/{}/{:.2}", r.0, r.1, r.2)).collect();
    outcome(
        purity >= PURITY_MIN && distinct >= DISTINCT_MIN && mi >= MI_MIN,
        format!(
            "DI-VST mean purity {purity:.3}, distinct codes {distinct:.1}, MI {mi:.3} nat over {SEPARATION_SEEDS} seeds [{}]",
            per.join(" ")
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: Vec<Criterion> = vec![
        (1, "gradient integrity", gradients::criterion),
        (2, "oracle equivalence", oracles::criterion),
        (3, "overfit capability", criterion_3),
        (4, "latent separation", criterion_4),
        (5, "transfer direction", transfer::criterion_5),
        (6, "seed-fraction monotonicity", transfer::criterion_6),
        (7, "protocol fidelity", aggregation::criterion),
        (8, "determinism", determinism::criterion),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n} ({name}): {status} - {} [{:.1}s]",
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
