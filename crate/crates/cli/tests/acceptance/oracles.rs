//! Library values against direct re-derivations on random small instances.

use fsdg_core::eval::{corpus_bleu, entity_f1, BleuConfig, EntityLexicon};
use fsdg_core::latent::{aggregate_posterior_kl, gaussian_kl, mutual_information};
use fsdg_core::rng::Rng;
use fsdg_core::tensor::{Precision, Tape, Tensor};

use crate::{outcome, Outcome};

pub const INSTANCES: usize = 200;
pub const TOLERANCE: f64 = 1e-9;

fn posterior(rng: &mut Rng, rows: usize, k: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| (3.0 * rng.uniform_range(-1.0, 1.0)).exp()).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x / s).collect()
        })
        .collect()
}

fn table(rows: &[Vec<f64>]) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

/// Average of the posteriors of variable `i` over the batch.
fn batch_average(p: &[Vec<f64>], m: usize, i: usize) -> Vec<f64> {
    let b = p.len() / m;
    let k = p[0].len();
    let mut q = vec![0.0; k];
    for e in 0..b {
        for j in 0..k {
            q[j] += p[e * m + i][j];
        }
    }
    q.iter().map(|x| x / b as f64).collect()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| if a == 0.0 { 0.0 } else { a * (a / b).ln() })
        .sum()
}

fn value(f: impl FnOnce(&mut Tape) -> fsdg_core::Result<fsdg_core::tensor::Var>) -> f64 {
    let mut tape = Tape::with_precision(Precision::F64);
    let v = f(&mut tape).unwrap();
    tape.value(v).item()
}

fn worst_latent(rng: &mut Rng) -> [f64; 4] {
    let mut worst = [0.0f64; 4];
    for _ in 0..INSTANCES {
        let m = 1 + rng.below(4);
        let k = 2 + rng.below(5);
        let b = 1 + rng.below(6);
        let p = posterior(rng, b * m, k);
        let uniform = vec![1.0 / k as f64; k];

        let want: f64 = (0..m).map(|i| kl(&batch_average(&p, m, i), &uniform)).sum();
        let got = value(|t| {
            let v = t.constant(table(&p));
            aggregate_posterior_kl(t, v, m, k)
        });
        worst[0] = worst[0].max((got - want).abs());

        let mut mi = 0.0;
        for e in 0..b {
            for i in 0..m {
                mi += kl(&p[e * m + i], &batch_average(&p, m, i));
            }
        }
        let want = mi / b as f64;
        let got = value(|t| {
            let v = t.constant(table(&p));
            mutual_information(t, v, m, k)
        });
        worst[1] = worst[1].max((got - want).abs());

        let q = posterior(rng, b * m, k);
        let want: f64 = p.iter().zip(&q).map(|(a, b)| kl(a, b)).sum();
        let got = value(|t| {
            let a = t.constant(table(&p));
            let c = t.constant(table(&q));
            t.categorical_kl(a, c)
        });
        worst[2] = worst[2].max((got - want).abs());

        let g = 1 + rng.below(6);
        let mu: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..g).map(|_| rng.uniform_range(-2.0, 2.0)).collect())
            .collect();
        let lv: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..g).map(|_| rng.uniform_range(-3.0, 3.0)).collect())
            .collect();
        // KL(N(mu, s^2) || N(0, 1)) = -ln s + (s^2 + mu^2) / 2 - 1/2 per coordinate.
        let mut want = 0.0;
        for (mr, lr) in mu.iter().zip(&lv) {
            for (&u, &l) in mr.iter().zip(lr) {
                let s = (0.5 * l).exp();
                want += -s.ln() + (s * s + u * u) / 2.0 - 0.5;
            }
        }
        let got = value(|t| {
            let a = t.constant(table(&mu));
            let c = t.constant(table(&lv));
            gaussian_kl(t, a, c)
        });
        worst[3] = worst[3].max((got - want).abs());
    }
    worst
}

fn words(rng: &mut Rng, vocab: &[&str], max: usize) -> Vec<String> {
    let n = rng.below(max + 1);
    (0..n).map(|_| vocab[rng.below(vocab.len())].to_string()).collect()
}

/// Clipped n-gram matches by pairwise comparison: each candidate n-gram may
/// claim one unused identical reference n-gram.
fn clipped(c: &[String], r: &[String], n: usize) -> (usize, usize) {
    if c.len() < n {
        return (0, 0);
    }
    let total = c.len() - n + 1;
    if r.len() < n {
        return (0, total);
    }
    let mut used = vec![false; r.len() - n + 1];
    let mut hit = 0;
    for i in 0..total {
        if let Some(j) = (0..used.len()).find(|&j| !used[j] && c[i..i + n] == r[j..j + n]) {
            used[j] = true;
            hit += 1;
        }
    }
    (hit, total)
}

fn bleu_oracle(cands: &[Vec<String>], refs: &[Vec<String>], max_n: usize, eps: f64) -> f64 {
    let c_len: usize = cands.iter().map(Vec::len).sum();
    let r_len: usize = refs.iter().map(Vec::len).sum();
    if c_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (mut hit, mut total) = (0, 0);
        for (c, r) in cands.iter().zip(refs) {
            let (h, t) = clipped(c, r, n);
            hit += h;
            total += t;
        }
        let p = if hit == 0 {
            eps / total.max(1) as f64
        } else {
            hit as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let bp = if c_len < r_len {
        (1.0 - r_len as f64 / c_len as f64).exp()
    } else {
        1.0
    };
    bp * (log_sum / max_n as f64).exp()
}

fn worst_bleu(rng: &mut Rng) -> f64 {
    let vocab = ["a", "b", "c", "d", "e"];
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let n = 1 + rng.below(4);
        let refs: Vec<Vec<String>> = (0..n).map(|_| words(rng, &vocab, 8)).collect();
        let cands: Vec<Vec<String>> = refs
            .iter()
            .map(|r| {
                // Mostly perturbed copies, so high orders match too.
                if rng.uniform() < 0.5 {
                    let mut c = r.clone();
                    for w in c.iter_mut() {
                        if rng.uniform() < 0.3 {
                            *w = vocab[rng.below(vocab.len())].to_string();
                        }
                    }
                    c
                } else {
                    words(rng, &vocab, 8)
                }
            })
            .collect();
        let max_n = 1 + rng.below(4);
        let cfg = BleuConfig {
            max_n,
            ..BleuConfig::default()
        };
        let got = corpus_bleu(&cands, &refs, &cfg).unwrap();
        let want = bleu_oracle(&cands, &refs, max_n, cfg.epsilon);
        worst = worst.max((got - want).abs());
    }
    worst
}

/// Longest-match extraction by scanning the whole form list at every position.
fn extract(forms: &[(Vec<String>, String)], toks: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let best = forms
            .iter()
            .filter(|(f, _)| i + f.len() <= toks.len() && toks[i..i + f.len()] == f[..])
            .max_by_key(|(f, _)| f.len());
        match best {
            Some((f, c)) => {
                out.push(c.clone());
                i += f.len();
            }
            None => i += 1,
        }
    }
    out
}

fn f1_oracle(forms: &[(Vec<String>, String)], cands: &[Vec<String>], refs: &[Vec<String>]) -> Option<f64> {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (c, r) in cands.iter().zip(refs) {
        let gold = extract(forms, r);
        if gold.is_empty() {
            continue;
        }
        let mut pred = extract(forms, c);
        let mut hit = 0;
        for g in &gold {
            if let Some(pos) = pred.iter().position(|p| p == g) {
                pred.remove(pos);
                hit += 1;
            }
        }
        tp += hit;
        fp += pred.len();
        fn_ += gold.len() - hit;
    }
    if tp + fn_ == 0 {
        return None;
    }
    let p = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = tp as f64 / (tp + fn_) as f64;
    Some(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
}

fn worst_entity(rng: &mut Rng) -> f64 {
    let vocab = ["x", "y", "z", "w", "v", "u"];
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let mut forms: Vec<(Vec<String>, String)> = Vec::new();
        for e in 0..1 + rng.below(4) {
            let len = 1 + rng.below(2);
            let surface: Vec<String> = (0..len).map(|_| vocab[rng.below(vocab.len())].to_string()).collect();
            if forms.iter().all(|(f, _)| *f != surface) {
                forms.push((surface, format!("e{e}")));
            }
        }
        let mut lex = EntityLexicon::new();
        for (f, c) in &forms {
            lex.insert(&f.join(" "), c);
        }
        let n = 1 + rng.below(4);
        let refs: Vec<Vec<String>> = (0..n).map(|_| words(rng, &vocab, 6)).collect();
        let cands: Vec<Vec<String>> = (0..n).map(|_| words(rng, &vocab, 6)).collect();
        let got = entity_f1(&cands, &refs, &lex).unwrap().map(|s| s.f1);
        let want = f1_oracle(&forms, &cands, &refs);
        let d = match (got, want) {
            (Some(a), Some(b)) => (a - b).abs(),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        };
        worst = worst.max(d);
    }
    worst
}

pub fn criterion() -> Outcome {
    let mut rng = Rng::seed(23);
    let [agg, mi, cat, gauss] = worst_latent(&mut rng);
    let bleu = worst_bleu(&mut rng);
    let ent = worst_entity(&mut rng);
    let all = [
        ("aggregate_posterior_kl", agg),
        ("mutual_information", mi),
        ("categorical KL", cat),
        ("Gaussian KL", gauss),
        ("BLEU", bleu),
        ("Entity F1", ent),
    ];
    let pass = all.iter().all(|(_, e)| *e <= TOLERANCE);
    let parts: Vec<String> = all.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    outcome(
        pass,
        format!(
            "max abs deviation over {INSTANCES} instances each: {}; tolerance {TOLERANCE:.0e}",
            parts.join(", ")
        ),
    )
}
