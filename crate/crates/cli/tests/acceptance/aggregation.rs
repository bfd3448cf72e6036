//! Report aggregation on injected score lists.
//!
//! Scores are multiples of 1/64 whose run total is divisible by the run
//! count, so the mean and every deviation are exact in binary; mean and
//! variance then each involve a single rounding, and the hand values
//! computed in integers must agree bit for bit.

use std::collections::BTreeMap;

use fsdg_cli::commands::evaluate_runs;
use fsdg_core::eval::{EvalReport, MetricSummary, RunScores};
use fsdg_core::rng::Rng;

use crate::{outcome, Outcome};

pub const RUNS: usize = 10;
const SCALE: i64 = 64;
const TRIALS: usize = 50;

/// `RUNS` numerators in `0..=SCALE` with a total divisible by `RUNS`.
fn numerators(rng: &mut Rng) -> Vec<i64> {
    loop {
        let mut v: Vec<i64> = (0..RUNS - 1).map(|_| rng.below(SCALE as usize + 1) as i64).collect();
        let rest: i64 = v.iter().sum();
        let need = (RUNS as i64 - rest % RUNS as i64) % RUNS as i64;
        let choices: Vec<i64> = (0..=SCALE).filter(|k| k % RUNS as i64 == need).collect();
        if let Some(&k) = rng.choose(&choices) {
            v.push(k);
            return v;
        }
    }
}

fn by_hand(k: &[i64]) -> (f64, f64) {
    let n = k.len() as i64;
    let total: i64 = k.iter().sum();
    let mean_num = total / n;
    let ss: i64 = k.iter().map(|&x| (x - mean_num) * (x - mean_num)).sum();
    (
        mean_num as f64 / SCALE as f64,
        ss as f64 / ((SCALE * SCALE) as f64 * (n - 1) as f64),
    )
}

fn matches(s: &MetricSummary, k: &[i64]) -> bool {
    let (m, v) = by_hand(k);
    s.mean.to_bits() == m.to_bits() && s.variance.to_bits() == v.to_bits() && s.runs == k.len() && !s.single_run
}

type Injected = BTreeMap<String, (Vec<i64>, Option<Vec<i64>>)>;

fn inject(rng: &mut Rng) -> Injected {
    let mut d = BTreeMap::new();
    d.insert("navigate".to_string(), (numerators(rng), Some(numerators(rng))));
    d.insert("schedule".to_string(), (numerators(rng), Some(numerators(rng))));
    d.insert("chitchat".to_string(), (numerators(rng), None));
    d
}

fn score_fn(
    inj: &Injected,
    order: &[usize],
) -> impl Fn(usize) -> fsdg_core::Result<(BTreeMap<String, RunScores>, ())> + Send + Sync {
    let inj = inj.clone();
    let order = order.to_vec();
    move |r| {
        let r = order[r];
        let s = inj
            .iter()
            .map(|(d, (b, f))| {
                (
                    d.clone(),
                    RunScores {
                        bleu: b[r] as f64 / SCALE as f64,
                        entity_f1: f.as_ref().map(|f| f[r] as f64 / SCALE as f64),
                    },
                )
            })
            .collect();
        Ok((s, ()))
    }
}

fn check(report: &EvalReport, inj: &Injected) -> bool {
    report.runs == RUNS
        && report.domains.len() == inj.len()
        && inj.iter().all(|(d, (b, f))| {
            let Some(r) = report.domains.get(d) else { return false };
            matches(&r.bleu, b)
                && match (f, &r.entity_f1) {
                    (Some(f), Some(s)) => matches(s, f),
                    (None, None) => true,
                    _ => false,
                }
        })
}

pub fn criterion() -> Outcome {
    let mut rng = Rng::seed(31);
    let mut bad = 0;
    let mut order_sensitive = 0;
    let mut roundtrip_bad = 0;
    for _ in 0..TRIALS {
        let inj = inject(&mut rng);
        let identity: Vec<usize> = (0..RUNS).collect();
        let (report, _, _) = evaluate_runs(RUNS, "full", score_fn(&inj, &identity)).unwrap();
        if !check(&report, &inj) {
            bad += 1;
        }
        let mut shuffled = identity.clone();
        rng.shuffle(&mut shuffled);
        let (again, _, _) = evaluate_runs(RUNS, "full", score_fn(&inj, &shuffled)).unwrap();
        if again != report {
            order_sensitive += 1;
        }
        let text = serde_json::to_string_pretty(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&text).unwrap();
        if back != report {
            roundtrip_bad += 1;
        }
    }
    outcome(
        bad == 0 && order_sensitive == 0 && roundtrip_bad == 0,
        format!(
            "{TRIALS} injected {RUNS}-run score sets over 3 domains x 2 metrics: {bad} mismatches against hand-computed \
             mean and unbiased variance (bitwise), {order_sensitive} run-order dependent, {roundtrip_bad} JSON round-trip losses"
        ),
    )
}
