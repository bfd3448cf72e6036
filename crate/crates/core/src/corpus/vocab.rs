use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::{Dialogue, Role, Utterance};
use super::kb::{serialize_kb, KB_MARKER};
use super::tokenize::tokenize;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const USR: usize = 4;
pub const SYS: usize = 5;
pub const KB: usize = 6;
pub const EMPTY: usize = 7;

pub const RESERVED: [&str; 8] = [
    "<pad>", "<unk>", "<bos>", "<eos>", "<usr>", "<sys>", KB_MARKER, "<empty>",
];

pub fn domain_token(domain: &str) -> String {
    format!("<d:{}>", domain.to_lowercase())
}

/// Token/id mapping. Ids: reserved markers, then domain tokens in sorted
/// order, then words by descending frequency (ties broken alphabetically).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::invalid("vocabulary must start with the reserved markers"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(RESERVED[UNK])
    }

    /// Domain token id; unknown domains are an error.
    pub fn domain_id(&self, domain: &str) -> Result<usize> {
        self.get(&domain_token(domain))
            .ok_or_else(|| Error::invalid(format!("unknown domain `{domain}`")))
    }

    /// Domain token id, or `UNK` for a domain never seen in training.
    pub fn domain_id_or_unk(&self, domain: &str) -> usize {
        self.id(&domain_token(domain))
    }

    pub fn domains(&self) -> Vec<String> {
        self.tokens
            .iter()
            .filter_map(|t| t.strip_prefix("<d:").and_then(|r| r.strip_suffix('>')))
            .map(str::to_string)
            .collect()
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// `[role marker] ++ words ++ [EOS]`. KB pseudo-turns carry their own
    /// record markers and get no extra prefix.
    pub fn encode_utterance(&self, u: &Utterance) -> Vec<usize> {
        let mut out = Vec::with_capacity(u.tokens.len() + 2);
        match u.role {
            Role::Usr => out.push(USR),
            Role::Sys => out.push(SYS),
            Role::Kb => {}
        }
        out.extend(u.tokens.iter().map(|t| self.id(t)));
        out.push(EOS);
        out
    }

    /// Context utterances, or a lone `[EMPTY, EOS]` when there are none.
    pub fn encode_context(&self, context: &[Utterance]) -> Vec<Vec<usize>> {
        if context.is_empty() {
            vec![vec![EMPTY, EOS]]
        } else {
            context.iter().map(|u| self.encode_utterance(u)).collect()
        }
    }

    /// Decoder target: words followed by `EOS`.
    pub fn encode_response<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        let mut out = self.encode_tokens(tokens);
        out.push(EOS);
        out
    }

    /// Words up to the first `EOS`, skipping other reserved markers.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i >= RESERVED.len() || i == UNK)
            .map(|&i| self.token(i).to_string())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = VocabFile {
            tokens: self.tokens.clone(),
        };
        std::fs::write(path, serde_json::to_string(&f)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: VocabFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_tokens(f.tokens)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "tokens": self.tokens })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let f: VocabFile = serde_json::from_value(v.clone())?;
        Self::from_tokens(f.tokens)
    }
}

/// All word tokens a dialogue contributes: turn text, annotations and the
/// serialized KB.
pub fn dialogue_tokens(d: &Dialogue) -> Vec<String> {
    let mut out: Vec<String> = serialize_kb(&d.kb)
        .split_whitespace()
        .filter(|t| *t != KB_MARKER)
        .map(str::to_string)
        .collect();
    for t in &d.turns {
        out.extend(tokenize(&t.text));
        for (s, v) in t.annotation.iter().flatten() {
            out.extend(tokenize(s));
            out.extend(tokenize(v));
        }
    }
    out
}

/// Build a vocabulary over several corpora. Words seen fewer than
/// `min_freq` times map to `UNK`.
pub fn build_vocabulary(corpora: &[&[Dialogue]], min_freq: usize) -> Result<Vocabulary> {
    if corpora.is_empty() {
        return Err(Error::invalid("no corpora to build a vocabulary from"));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut domains = BTreeSet::new();
    for corpus in corpora {
        for d in corpus.iter() {
            domains.insert(domain_token(&d.domain));
            for t in dialogue_tokens(d) {
                *counts.entry(t).or_default() += 1;
            }
        }
    }
    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend(domains.iter().cloned());
    let mut words: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq.max(1) && !RESERVED.contains(&t.as_str()) && !domains.contains(t))
        .collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    tokens.extend(words.into_iter().map(|(t, _)| t));
    Vocabulary::from_tokens(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::data::{Speaker, Turn};

    fn dlg(domain: &str, texts: &[&str]) -> Dialogue {
        Dialogue {
            domain: domain.into(),
            kb: vec![],
            turns: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Turn::new(if i % 2 == 0 { Speaker::Usr } else { Speaker::Sys }, *t))
                .collect(),
        }
    }

    #[test]
    fn ordering_and_reserved_ids() {
        let a = [dlg("Weather", &["b a a", "c b a"])];
        let b = [dlg("navigate", &["a"])];
        let v = build_vocabulary(&[&a, &b], 1).unwrap();
        assert!(build_vocabulary(&[], 1).is_err());
        assert_eq!(v.token(EOS), "<eos>");
        assert_eq!(v.token(8), "<d:navigate>");
        assert_eq!(v.token(9), "<d:weather>");
        assert_eq!(&v.tokens()[10..], ["a", "b", "c"]);
        assert_eq!(v.domain_id("WEATHER").unwrap(), 9);
        assert_eq!(v.domain_id_or_unk("schedule"), UNK);
        assert!(v.domain_id("schedule").is_err());
        assert_eq!(v.domains(), vec!["navigate", "weather"]);
    }

    #[test]
    fn min_freq_and_roundtrip() {
        let a = [dlg("w", &["x x y"])];
        let v = build_vocabulary(&[&a], 2).unwrap();
        assert_eq!(v.id("y"), UNK);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.json");
        v.save(&p).unwrap();
        assert_eq!(Vocabulary::load(&p).unwrap(), v);
    }

    #[test]
    fn encodings() {
        let a = [dlg("w", &["hello there"])];
        let v = build_vocabulary(&[&a], 1).unwrap();
        let u = Utterance {
            role: Role::Usr,
            tokens: vec!["hello".into(), "zzz".into()],
        };
        assert_eq!(v.encode_utterance(&u), vec![USR, v.id("hello"), UNK, EOS]);
        assert_eq!(v.encode_context(&[]), vec![vec![EMPTY, EOS]]);
        let r = v.encode_response(&["there"]);
        assert_eq!(v.decode(&r), vec!["there"]);
    }
}
