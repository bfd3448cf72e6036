use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::canonicalize;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub canonical: String,
    pub surface_forms: Vec<String>,
}

pub fn load_lexicon(path: &Path) -> Result<Vec<LexiconEntry>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: LexiconEntry = serde_json::from_str(line).map_err(|e| Error::Corpus {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        if e.surface_forms.is_empty() {
            return Err(Error::Corpus {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("entity `{}` has no surface forms", e.canonical),
            });
        }
        out.push(e);
    }
    Ok(out)
}

pub fn save_lexicon(path: &Path, entries: &[LexiconEntry]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut f, e)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// One entry per distinct canonical value, surface forms sorted.
pub fn lexicon_from_values<I, S>(values: I) -> Vec<LexiconEntry>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for v in values {
        let forms = map.entry(canonicalize(v.as_ref())).or_default();
        let s = v.as_ref().to_string();
        if !forms.contains(&s) {
            forms.push(s);
        }
    }
    map.into_iter()
        .filter(|(c, _)| !c.is_empty())
        .map(|(canonical, mut surface_forms)| {
            surface_forms.sort();
            LexiconEntry {
                canonical,
                surface_forms,
            }
        })
        .collect()
}
