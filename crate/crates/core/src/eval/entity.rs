use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{canonicalize, KbRecord, LexiconEntry};
use crate::error::{Error, Result};

/// Surface forms, canonicalized to `_`-joined lowercase tokens, mapped to
/// their canonical entity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EntityLexicon {
    forms: HashMap<String, String>,
    max_tokens: usize,
}

impl EntityLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: &[LexiconEntry]) -> Self {
        let mut lex = Self::new();
        for e in entries {
            for f in &e.surface_forms {
                lex.insert(f, &e.canonical);
            }
        }
        lex
    }

    pub fn insert(&mut self, surface: &str, canonical: &str) {
        let key = canonicalize(surface);
        if key.is_empty() {
            return;
        }
        self.max_tokens = self.max_tokens.max(key.split('_').count());
        self.forms.entry(key).or_insert_with(|| canonicalize(canonical));
    }

    /// Every KB value becomes an entity of its own.
    pub fn add_kb(&mut self, kb: &[KbRecord]) {
        for r in kb {
            for (_, v) in r.pairs() {
                self.insert(v, v);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    /// Canonical entities mentioned in a token sequence, longest match first,
    /// left to right, without overlaps.
    pub fn extract<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        let toks: Vec<String> = tokens.iter().map(|t| canonicalize(t.as_ref())).collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < toks.len() {
            let longest = self.max_tokens.min(toks.len() - i);
            let hit = (1..=longest).rev().find_map(|n| {
                let key = toks[i..i + n].join("_");
                self.forms.get(&key).map(|c| (n, c.clone()))
            });
            match hit {
                Some((n, c)) => {
                    out.push(c);
                    i += n;
                }
                None => i += 1,
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn multiset(items: Vec<String>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for i in items {
        *m.entry(i).or_insert(0) += 1;
    }
    m
}

/// Micro-averaged entity F1. Responses whose reference mentions no entity
/// are skipped; `None` if no reference mentions any entity.
pub fn entity_f1<S: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<S>],
    lexicon: &EntityLexicon,
) -> Result<Option<EntityScore>> {
    if candidates.len() != references.len() {
        return Err(Error::invalid(format!(
            "entity F1: {} candidates vs {} references",
            candidates.len(),
            references.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (c, r) in candidates.iter().zip(references) {
        let gold = multiset(lexicon.extract(r));
        if gold.is_empty() {
            continue;
        }
        let pred = multiset(lexicon.extract(c));
        let hit: usize = gold
            .iter()
            .map(|(e, &g)| g.min(pred.get(e).copied().unwrap_or(0)))
            .sum();
        tp += hit;
        fp += pred.values().sum::<usize>() - hit;
        fn_ += gold.values().sum::<usize>() - hit;
    }
    if tp + fn_ == 0 {
        return Ok(None);
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = tp as f64 / (tp + fn_) as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Some(EntityScore {
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
    }))
}
