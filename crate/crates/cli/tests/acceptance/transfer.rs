//! Few-shot benchmark on synthetic domains sharing one surface grammar.
//! Latent models are pre-trained once per process; per-run scores are cached
//! so later criteria reuse earlier runs.

use std::collections::BTreeMap;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use fsdg_cli::config::RunConfig;
use fsdg_cli::pipeline::{predict, pretrain_latent, protocol_run, score_by_domain};
use fsdg_core::corpus::{exclude_domains, generate_synthetic_corpus, Dialogue, LexiconEntry};
use fsdg_core::fsdg::FsdgVariant;
use fsdg_core::latent::{LatentModel, LatentVariant};
use fsdg_core::rng::Rng;

use crate::{outcome, spec, Outcome};

pub const RUNS: usize = 10;
pub const WINS_MIN: usize = 7;
pub const BUDGET_SECS: f64 = 30.0 * 60.0;
pub const FRACTIONS: [f64; 4] = [0.01, 0.03, 0.05, 0.10];
const CORPUS_SEED: u64 = 1;
const TARGET: &str = "navigate";

struct Bench {
    cfg: RunConfig,
    source: Vec<Dialogue>,
    target: Vec<Dialogue>,
    test: Vec<Dialogue>,
    lexicon: Vec<LexiconEntry>,
    latent: Vec<LatentModel>,
}

static BENCH: OnceLock<Bench> = OnceLock::new();
static SCORES: Mutex<BTreeMap<(&'static str, u32), Vec<f64>>> = Mutex::new(BTreeMap::new());

fn bench() -> &'static Bench {
    BENCH.get_or_init(|| {
        let cfg: RunConfig = serde_json::from_str(include_str!("../../../../fixtures/benchmark_config.json")).unwrap();
        cfg.validate().unwrap();
        let corpus = generate_synthetic_corpus(
            &spec(include_str!("../../../../fixtures/benchmark.json")),
            &mut Rng::seed(CORPUS_SEED),
        )
        .unwrap();
        let target = corpus.targets.into_iter().find(|t| t.domain == TARGET).unwrap();
        let transfer = exclude_domains(&corpus.transfer, &[TARGET.to_string()]).kept;
        let latent = [LatentVariant::DiVae, LatentVariant::DiVst]
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                pretrain_latent(&cfg, v, &transfer, &mut Rng::derive(cfg.seed, i as u64))
                    .unwrap()
                    .0
            })
            .collect();
        Bench {
            cfg,
            source: corpus.source,
            target: target.train,
            test: target.test,
            lexicon: target.lexicon,
            latent,
        }
    })
}

/// Target Entity F1 of each protocol run at seed fraction `p`.
fn target_f1(variant: FsdgVariant, p: f64) -> Vec<f64> {
    let key = (variant.name(), (p * 1000.0).round() as u32);
    if let Some(v) = SCORES.lock().unwrap().get(&key) {
        return v.clone();
    }
    let b = bench();
    let mut cfg = b.cfg.clone();
    cfg.seed_fraction = p;
    cfg.model.variant = variant;
    let latent = if variant == FsdgVariant::FsdgLaed {
        b.latent.clone()
    } else {
        Vec::new()
    };
    let scores: Vec<f64> = (0..RUNS)
        .map(|r| {
            let (_, trained) = protocol_run(&cfg, &b.source, &b.target, latent.clone(), r).unwrap();
            let preds = predict(&trained.model, &b.test, cfg.max_response_len, 64).unwrap();
            let by_domain = score_by_domain(&preds, Some(&b.lexicon), &cfg.eval.bleu).unwrap();
            let f1 = by_domain[TARGET].entity_f1.unwrap_or(0.0);
            eprintln!(
                "  {} p={p:.2} run {r}: target Entity F1 {f1:.3}, {} steps",
                variant.name(),
                trained.summary.steps
            );
            f1
        })
        .collect();
    SCORES.lock().unwrap().insert(key, scores.clone());
    scores
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn criterion_5() -> Outcome {
    let t = Instant::now();
    let laed = target_f1(FsdgVariant::FsdgLaed, 0.10);
    let plain = target_f1(FsdgVariant::Fsdg, 0.10);
    let secs = t.elapsed().as_secs_f64();
    let wins = laed.iter().zip(&plain).filter(|(a, b)| a > b).count();
    let pairs: Vec<String> = laed.iter().zip(&plain).map(|(a, b)| format!("{a:.3}/{b:.3}")).collect();
    outcome(
        wins >= WINS_MIN && secs < BUDGET_SECS,
        format!(
            "FSDG+LAED beats FSDG on target Entity F1 in {wins}/{RUNS} paired runs at p=0.10 (need {WINS_MIN}); \
             means {:.3} vs {:.3}; {:.1} min [{}]",
            mean(&laed),
            mean(&plain),
            secs / 60.0,
            pairs.join(" ")
        ),
    )
}

pub fn criterion_6() -> Outcome {
    let means: Vec<f64> = FRACTIONS
        .iter()
        .map(|&p| mean(&target_f1(FsdgVariant::FsdgLaed, p)))
        .collect();
    let monotone = means.windows(2).all(|w| w[1] >= w[0]);
    let parts: Vec<String> = FRACTIONS
        .iter()
        .zip(&means)
        .map(|(p, m)| format!("p={p:.2}: {m:.3}"))
        .collect();
    outcome(
        monotone,
        format!("FSDG+LAED mean target Entity F1 over {RUNS} runs: {}", parts.join(", ")),
    )
}
