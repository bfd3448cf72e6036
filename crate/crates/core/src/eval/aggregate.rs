use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Unbiased sample variance; 0 for a single run.
    pub variance: f64,
    pub runs: usize,
    pub single_run: bool,
}

/// Mean and unbiased variance. Values are summed in sorted order so the
/// result does not depend on run order.
pub fn summarize(values: &[f64]) -> Result<MetricSummary> {
    if values.is_empty() {
        return Err(Error::invalid("no runs to aggregate"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    sq.sort_by(f64::total_cmp);
    let variance = if v.len() > 1 {
        sq.iter().sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(MetricSummary {
        mean,
        variance,
        runs: v.len(),
        single_run: v.len() == 1,
    })
}

/// Scores of one run on one domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunScores {
    pub bleu: f64,
    /// Absent when the domain has no gold entities or no lexicon.
    pub entity_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub runs: usize,
    pub bleu: MetricSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_f1: Option<MetricSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// How runs were produced, e.g. `resample` or `fixed`.
    pub mode: String,
    pub runs: usize,
    pub domains: BTreeMap<String, DomainReport>,
}

/// `runs[r]` maps each domain to its scores in run `r`.
pub fn aggregate_runs(runs: &[BTreeMap<String, RunScores>], mode: &str) -> Result<EvalReport> {
    if runs.is_empty() {
        return Err(Error::invalid("no runs to aggregate"));
    }
    let mut per: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for run in runs {
        for (d, s) in run {
            let e = per.entry(d.clone()).or_default();
            e.0.push(s.bleu);
            e.1.extend(s.entity_f1);
        }
    }
    let mut domains = BTreeMap::new();
    for (d, (bleu, f1)) in per {
        domains.insert(
            d,
            DomainReport {
                runs: bleu.len(),
                bleu: summarize(&bleu)?,
                entity_f1: if f1.is_empty() { None } else { Some(summarize(&f1)?) },
            },
        );
    }
    Ok(EvalReport {
        mode: mode.to_string(),
        runs: runs.len(),
        domains,
    })
}
