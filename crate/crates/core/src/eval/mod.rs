//! Response-quality metrics and multi-run aggregation. Everything here is a
//! pure function of its inputs.

mod aggregate;
mod bleu;
mod entity;

pub use aggregate::{aggregate_runs, summarize, DomainReport, EvalReport, MetricSummary, RunScores};
pub use bleu::{corpus_bleu, BleuConfig};
pub use entity::{entity_f1, EntityLexicon, EntityScore};

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of a predictions file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(rename = "context-id", alias = "context_id")]
    pub context_id: String,
    pub prediction: String,
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Corpus {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn save_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in preds {
        serde_json::to_writer(&mut f, p)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// BLEU and Entity F1 of a prediction list.
pub fn score_predictions(
    preds: &[Prediction],
    lexicon: Option<&EntityLexicon>,
    bleu: &BleuConfig,
) -> Result<RunScores> {
    let c: Vec<Vec<String>> = preds.iter().map(|p| crate::corpus::tokenize(&p.prediction)).collect();
    let r: Vec<Vec<String>> = preds.iter().map(|p| crate::corpus::tokenize(&p.reference)).collect();
    let b = corpus_bleu(&c, &r, bleu)?;
    let f = match lexicon {
        Some(l) => entity_f1(&c, &r, l)?.map(|s| s.f1),
        None => None,
    };
    Ok(RunScores { bleu: b, entity_f1: f })
}
