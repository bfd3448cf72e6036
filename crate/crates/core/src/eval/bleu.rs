use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BleuConfig {
    pub max_n: usize,
    /// Numerator used for an n-gram order with no matches at all.
    pub epsilon: f64,
    /// Average sentence-level scores instead of pooling counts.
    pub sentence_average: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self {
            max_n: 4,
            epsilon: 1e-9,
            sentence_average: false,
        }
    }
}

fn ngram_counts<S: AsRef<str>>(toks: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped matches and candidate n-gram total for one pair.
fn matches<S: AsRef<str>>(cand: &[S], reference: &[S], n: usize) -> (usize, usize) {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let hit = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    (hit, cand.len().saturating_sub(n - 1))
}

fn score(matched: &[usize], totals: &[usize], cand_len: usize, ref_len: usize, cfg: &BleuConfig) -> f64 {
    if cand_len == 0 {
        return 0.0;
    }
    let log_p: f64 = matched
        .iter()
        .zip(totals)
        .map(|(&m, &t)| {
            let denom = t.max(1) as f64;
            if m == 0 {
                (cfg.epsilon / denom).ln()
            } else {
                (m as f64 / denom).ln()
            }
        })
        .sum::<f64>()
        / cfg.max_n as f64;
    let bp = if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    bp * log_p.exp()
}

/// BLEU over aligned candidate/reference token lists (one reference each).
pub fn corpus_bleu<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>], cfg: &BleuConfig) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::invalid(format!(
            "BLEU: {} candidates vs {} references",
            candidates.len(),
            references.len()
        )));
    }
    if cfg.max_n == 0 {
        return Err(Error::invalid("BLEU: max_n must be positive"));
    }
    let n = cfg.max_n;
    if cfg.sentence_average {
        if candidates.is_empty() {
            return Ok(0.0);
        }
        let total: f64 = candidates
            .iter()
            .zip(references)
            .map(|(c, r)| {
                let (m, t): (Vec<usize>, Vec<usize>) = (1..=n).map(|k| matches(c, r, k)).unzip();
                score(&m, &t, c.len(), r.len(), cfg)
            })
            .sum();
        return Ok(total / candidates.len() as f64);
    }
    let mut matched = vec![0; n];
    let mut totals = vec![0; n];
    for (c, r) in candidates.iter().zip(references) {
        for k in 1..=n {
            let (m, t) = matches(c, r, k);
            matched[k - 1] += m;
            totals[k - 1] += t;
        }
    }
    let cand_len = candidates.iter().map(Vec::len).sum();
    let ref_len = references.iter().map(Vec::len).sum();
    Ok(score(&matched, &totals, cand_len, ref_len, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_is_one() {
        let c = vec![toks("the cat sat on the mat"), toks("a dog ran far away")];
        approx::assert_abs_diff_eq!(
            corpus_bleu(&c, &c, &BleuConfig::default()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn brevity_penalty_case() {
        let cfg = BleuConfig {
            max_n: 1,
            ..BleuConfig::default()
        };
        let b = corpus_bleu(&[toks("the cat")], &[toks("the cat sat")], &cfg).unwrap();
        approx::assert_abs_diff_eq!(b, (1.0f64 - 1.5).exp(), epsilon = 1e-12);
        approx::assert_abs_diff_eq!(b, 0.6065, epsilon = 1e-4);
    }

    #[test]
    fn no_overlap_is_near_zero_and_mismatch_rejected() {
        let b = corpus_bleu(&[toks("x y z")], &[toks("a b c")], &BleuConfig::default()).unwrap();
        assert!(b <= 1e-6);
        assert!(corpus_bleu(&[toks("a")], &[], &BleuConfig::default()).is_err());
        assert_eq!(
            corpus_bleu(&[toks("")], &[toks("a")], &BleuConfig::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn clipping() {
        let cfg = BleuConfig {
            max_n: 1,
            ..BleuConfig::default()
        };
        let b = corpus_bleu(&[toks("the the the")], &[toks("the cat sat")], &cfg).unwrap();
        approx::assert_abs_diff_eq!(b, 1.0 / 3.0, epsilon = 1e-12);
    }
}
