//! Template-driven synthetic multi-domain dialogue corpora.
//!
//! Each dialogue follows a flow of intents. An intent contributes a user turn
//! and/or a system turn, each drawn from its template list. Templates refer to
//! per-dialogue slot values as `{slot}` and to the first KB record as
//! `{kb.field}`. Every turn is annotated with its intent and the values it
//! mentions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::data::{Dialogue, KbRecord, Speaker, Turn};
use super::lexicon::{lexicon_from_values, LexiconEntry};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    /// Latent pre-training only.
    Transfer,
    /// Response-generator training domains.
    Source,
    Target,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KbField {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KbSpec {
    pub records: usize,
    pub fields: Vec<KbField>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentSpec {
    pub name: String,
    #[serde(default)]
    pub user: Vec<String>,
    #[serde(default)]
    pub system: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub kind: DomainKind,
    pub dialogues: usize,
    /// Held-out dialogues generated for a target domain's test split.
    #[serde(default)]
    pub test_dialogues: usize,
    #[serde(default)]
    pub slots: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub kb: Option<KbSpec>,
    pub intents: Vec<IntentSpec>,
    /// Intent sequences; when empty, each dialogue is `flow_length` uniformly
    /// drawn intents.
    #[serde(default)]
    pub flows: Vec<Vec<String>>,
    #[serde(default = "default_flow_length")]
    pub flow_length: usize,
}

fn default_flow_length() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub domains: Vec<DomainSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetCorpus {
    pub domain: String,
    pub train: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
    pub lexicon: Vec<LexiconEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub transfer: Vec<Dialogue>,
    pub source: Vec<Dialogue>,
    pub targets: Vec<TargetCorpus>,
}

enum Piece {
    Text(String),
    Slot(String),
    Kb(String),
}

fn parse_template(t: &str) -> Result<Vec<Piece>> {
    let mut out = Vec::new();
    let mut rest = t;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            out.push(Piece::Text(rest[..open].to_string()));
        }
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| Error::Config(format!("unclosed placeholder in template `{t}`")))?
            + open;
        let name = rest[open + 1..close].trim();
        out.push(match name.strip_prefix("kb.") {
            Some(f) => Piece::Kb(f.to_string()),
            None => Piece::Slot(name.to_string()),
        });
        rest = &rest[close + 1..];
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest.to_string()));
    }
    Ok(out)
}

fn validate(spec: &SynthSpec) -> Result<()> {
    if spec.domains.is_empty() {
        return Err(Error::Config("synthetic spec has no domains".into()));
    }
    let mut names = std::collections::BTreeSet::new();
    for d in &spec.domains {
        if !names.insert(d.name.to_lowercase()) {
            return Err(Error::Config(format!("duplicate domain `{}`", d.name)));
        }
        if d.intents.is_empty() {
            return Err(Error::Config(format!("domain `{}` has no intents", d.name)));
        }
        if d.kind == DomainKind::Target && d.kb.is_none() {
            return Err(Error::Config(format!("target domain `{}` needs a KB", d.name)));
        }
        for (s, vals) in &d.slots {
            if vals.is_empty() {
                return Err(Error::Config(format!("slot `{s}` in `{}` has no values", d.name)));
            }
        }
        if let Some(kb) = &d.kb {
            if kb.records == 0 || kb.fields.iter().any(|f| f.values.is_empty()) {
                return Err(Error::Config(format!("KB of `{}` is empty", d.name)));
            }
        }
        for flow in &d.flows {
            for i in flow {
                if !d.intents.iter().any(|x| &x.name == i) {
                    return Err(Error::Config(format!(
                        "flow of `{}` names unknown intent `{i}`",
                        d.name
                    )));
                }
            }
        }
        for intent in &d.intents {
            if intent.user.is_empty() && intent.system.is_empty() {
                return Err(Error::Config(format!("intent `{}` has no templates", intent.name)));
            }
            for t in intent.user.iter().chain(&intent.system) {
                for p in parse_template(t)? {
                    match p {
                        Piece::Slot(s) if !d.slots.contains_key(&s) => {
                            return Err(Error::Config(format!("template `{t}` uses unknown slot `{s}`")));
                        }
                        Piece::Kb(f) if !d.kb.as_ref().is_some_and(|kb| kb.fields.iter().any(|x| x.name == f)) => {
                            return Err(Error::Config(format!("template `{t}` uses unknown KB field `{f}`")));
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    Ok(())
}

fn render(
    template: &str,
    slots: &BTreeMap<String, String>,
    kb: Option<&KbRecord>,
) -> Result<(String, Vec<(String, String)>)> {
    let mut text = String::new();
    let mut mentions = Vec::new();
    for p in parse_template(template)? {
        match p {
            Piece::Text(s) => text.push_str(&s),
            Piece::Slot(s) => {
                let v = &slots[&s];
                text.push_str(v);
                mentions.push((s, v.clone()));
            }
            Piece::Kb(f) => {
                let v = kb.and_then(|r| r.get(&f)).unwrap_or_default().to_string();
                text.push_str(&v);
                mentions.push((f, v));
            }
        }
    }
    Ok((text, mentions))
}

fn pick<'a, T>(rng: &mut Rng, items: &'a [T]) -> &'a T {
    rng.choose(items).expect("validated as nonempty")
}

fn dialogue(d: &DomainSpec, rng: &mut Rng) -> Result<Dialogue> {
    let slots: BTreeMap<String, String> = d.slots.iter().map(|(k, v)| (k.clone(), pick(rng, v).clone())).collect();
    let kb: Vec<KbRecord> = match &d.kb {
        None => Vec::new(),
        Some(spec) => (0..spec.records)
            .map(|_| {
                let pairs = spec
                    .fields
                    .iter()
                    .map(|f| (f.name.clone(), pick(rng, &f.values).clone()))
                    .collect();
                KbRecord::new(pairs).map_err(Error::Config)
            })
            .collect::<Result<_>>()?,
    };
    let flow: Vec<&IntentSpec> = if d.flows.is_empty() {
        (0..d.flow_length.max(1)).map(|_| pick(rng, &d.intents)).collect()
    } else {
        pick(rng, &d.flows)
            .iter()
            .map(|n| d.intents.iter().find(|i| &i.name == n).unwrap())
            .collect()
    };
    let mut turns = Vec::new();
    for intent in flow {
        for (speaker, templates) in [(Speaker::Usr, &intent.user), (Speaker::Sys, &intent.system)] {
            if templates.is_empty() {
                continue;
            }
            let (text, mentions) = render(pick(rng, templates), &slots, kb.first())?;
            let mut annotation = vec![("intent".to_string(), intent.name.clone())];
            annotation.extend(mentions);
            turns.push(Turn {
                speaker,
                text,
                annotation: Some(annotation),
            });
        }
    }
    Ok(Dialogue {
        domain: d.name.clone(),
        kb,
        turns,
    })
}

/// Generate all domains in spec order from one RNG stream.
pub fn generate_synthetic_corpus(spec: &SynthSpec, rng: &mut Rng) -> Result<SynthCorpus> {
    validate(spec)?;
    let mut transfer = Vec::new();
    let mut source = Vec::new();
    let mut targets = Vec::new();
    for d in &spec.domains {
        match d.kind {
            DomainKind::Transfer | DomainKind::Source => {
                let dest = if d.kind == DomainKind::Source {
                    &mut source
                } else {
                    &mut transfer
                };
                for _ in 0..d.dialogues + d.test_dialogues {
                    dest.push(dialogue(d, rng)?);
                }
            }
            DomainKind::Target => {
                let train = (0..d.dialogues).map(|_| dialogue(d, rng)).collect::<Result<Vec<_>>>()?;
                let test = (0..d.test_dialogues)
                    .map(|_| dialogue(d, rng))
                    .collect::<Result<Vec<_>>>()?;
                let kb_values =
                    d.kb.iter()
                        .flat_map(|kb| kb.fields.iter().flat_map(|f| f.values.iter()));
                let slot_values = d.slots.values().flatten();
                targets.push(TargetCorpus {
                    domain: d.name.clone(),
                    train,
                    test,
                    lexicon: lexicon_from_values(kb_values.chain(slot_values)),
                });
            }
        }
    }
    Ok(SynthCorpus {
        transfer,
        source,
        targets,
    })
}
