use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Usr,
    Sys,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    /// Slot-value pairs describing the utterance, when annotated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<Vec<(String, String)>>,
}

impl Turn {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Self {
            speaker,
            text: text.into(),
            annotation: None,
        }
    }
}

/// One knowledge-base row: ordered `field -> value` pairs with unique fields.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct KbRecord(Vec<(String, String)>);

impl KbRecord {
    /// Fails on a repeated field name.
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self, String> {
        for (i, (f, _)) in pairs.iter().enumerate() {
            if pairs[..i].iter().any(|(g, _)| g == f) {
                return Err(format!("duplicate KB field `{f}`"));
            }
        }
        Ok(Self(pairs))
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.0
    }

    pub fn get(&self, field: &str) -> Option<&str> {
        self.0.iter().find(|(f, _)| f == field).map(|(_, v)| v.as_str())
    }
}

impl Serialize for KbRecord {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for KbRecord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RecordVisitor;
        impl<'de> Visitor<'de> for RecordVisitor {
            type Value = KbRecord;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object of string fields")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<KbRecord, A::Error> {
                let mut pairs = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, String>()? {
                    pairs.push((k, v));
                }
                KbRecord::new(pairs).map_err(serde::de::Error::custom)
            }
        }
        d.deserialize_map(RecordVisitor)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub domain: String,
    #[serde(default)]
    pub kb: Vec<KbRecord>,
    pub turns: Vec<Turn>,
}

/// Who produced an utterance placed in a model context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Usr,
    Sys,
    /// Serialized knowledge-base pseudo-turn.
    Kb,
}

impl From<Speaker> for Role {
    fn from(s: Speaker) -> Self {
        match s {
            Speaker::Usr => Role::Usr,
            Speaker::Sys => Role::Sys,
        }
    }
}

/// A tokenized utterance with its role.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Utterance {
    pub role: Role,
    pub tokens: Vec<String>,
}

/// A `(context, response, domain)` training pair.
///
/// The context holds, in order, the KB pseudo-turn (when the dialogue has a
/// KB) followed by every turn before the response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub domain: String,
    pub context: Vec<Utterance>,
    pub response: Vec<String>,
    pub kb: Vec<KbRecord>,
    /// Position of the source dialogue in its corpus, and of the response turn.
    pub dialogue: usize,
    pub turn: usize,
}

/// An utterance with its immediate neighbours inside a dialogue.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Triple {
    pub domain: String,
    pub prev: Option<Utterance>,
    pub mid: Utterance,
    pub next: Option<Utterance>,
    /// Value of the `intent` annotation of the middle turn, if present.
    pub intent: Option<String>,
}

/// An annotated utterance for the domain-description objective.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DescriptionExample {
    pub domain: String,
    /// `slot value slot value ...`
    pub annotation: Vec<String>,
    pub utterance: Utterance,
}
