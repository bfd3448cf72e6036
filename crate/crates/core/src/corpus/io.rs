use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;

use super::data::Dialogue;
use super::tokenize::tokenize;
use crate::error::{Error, Result};

/// Read a JSONL corpus, one dialogue per non-blank line.
pub fn load_corpus(path: &Path) -> Result<Vec<Dialogue>> {
    let file = std::fs::File::open(path)?;
    read_corpus(BufReader::new(file), &path.display().to_string())
}

pub fn read_corpus<R: BufRead>(reader: R, name: &str) -> Result<Vec<Dialogue>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Corpus {
            path: name.into(),
            line: i + 1,
            msg,
        };
        let d: Dialogue = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if d.domain.trim().is_empty() {
            return Err(err("empty domain".into()));
        }
        if d.turns.is_empty() {
            return Err(err("dialogue has no turns".into()));
        }
        out.push(d);
    }
    Ok(out)
}

pub fn save_corpus(path: &Path, dialogues: &[Dialogue]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for d in dialogues {
        serde_json::to_writer(&mut f, d)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DomainStats {
    pub dialogues: usize,
    pub utterances: usize,
    /// Mean utterances per dialogue.
    pub mean_length: f64,
    /// Mean tokens per utterance.
    pub mean_tokens: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CorpusStats {
    pub domains: BTreeMap<String, DomainStats>,
    pub dialogues: usize,
    pub utterances: usize,
}

pub fn get_stats(dialogues: &[Dialogue]) -> CorpusStats {
    let mut domains: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for d in dialogues {
        let e = domains.entry(d.domain.to_lowercase()).or_default();
        e.0 += 1;
        e.1 += d.turns.len();
        e.2 += d.turns.iter().map(|t| tokenize(&t.text).len()).sum::<usize>();
    }
    let domains: BTreeMap<String, DomainStats> = domains
        .into_iter()
        .map(|(k, (n, u, t))| {
            let s = DomainStats {
                dialogues: n,
                utterances: u,
                mean_length: u as f64 / n as f64,
                mean_tokens: if u == 0 { 0.0 } else { t as f64 / u as f64 },
            };
            (k, s)
        })
        .collect();
    CorpusStats {
        dialogues: dialogues.len(),
        utterances: dialogues.iter().map(|d| d.turns.len()).sum(),
        domains,
    }
}
