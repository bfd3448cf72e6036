use super::data::{DescriptionExample, Dialogue, Role, Speaker, TrainingExample, Triple, Utterance};
use super::kb::serialize_kb;
use super::tokenize::tokenize;
use crate::error::{Error, Result};
use crate::rng::Rng;

fn kb_utterance(d: &Dialogue) -> Option<Utterance> {
    if d.kb.is_empty() {
        return None;
    }
    Some(Utterance {
        role: Role::Kb,
        tokens: serialize_kb(&d.kb).split_whitespace().map(str::to_string).collect(),
    })
}

fn turn_utterance(d: &Dialogue, i: usize) -> Utterance {
    Utterance {
        role: d.turns[i].speaker.into(),
        tokens: tokenize(&d.turns[i].text),
    }
}

/// Every `(context, system response)` pair of one dialogue.
pub fn dialogue_pairs(d: &Dialogue, index: usize) -> Vec<TrainingExample> {
    let kb = kb_utterance(d);
    let mut out = Vec::new();
    for (t, turn) in d.turns.iter().enumerate() {
        if turn.speaker != Speaker::Sys {
            continue;
        }
        let mut context: Vec<Utterance> = kb.iter().cloned().collect();
        context.extend((0..t).map(|i| turn_utterance(d, i)));
        out.push(TrainingExample {
            domain: d.domain.to_lowercase(),
            context,
            response: tokenize(&turn.text),
            kb: d.kb.clone(),
            dialogue: index,
            turn: t,
        });
    }
    out
}

/// KB pseudo-turn (if any) followed by every turn, in order.
pub fn dialogue_utterances(d: &Dialogue) -> Vec<Utterance> {
    let mut out: Vec<Utterance> = kb_utterance(d).into_iter().collect();
    out.extend((0..d.turns.len()).map(|i| turn_utterance(d, i)));
    out
}

pub fn candidate_pairs(dialogues: &[Dialogue]) -> Vec<TrainingExample> {
    dialogues
        .iter()
        .enumerate()
        .flat_map(|(i, d)| dialogue_pairs(d, i))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleUnit {
    /// Sample individual context/response pairs.
    #[default]
    Pairs,
    /// Sample whole dialogues and keep all of their pairs.
    Dialogues,
}

/// `ceil(p * n)`, tolerant of float noise in `p * n`.
pub fn sample_count(p: f64, n: usize) -> usize {
    ((p * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Random seed-data sample of fraction `p` of a target corpus.
///
/// The sample is a prefix of one random permutation, so for a fixed RNG
/// seed smaller fractions yield subsets of larger ones.
pub fn sample_seed_set(
    dialogues: &[Dialogue],
    p: f64,
    unit: SampleUnit,
    rng: &mut Rng,
) -> Result<Vec<TrainingExample>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("seed fraction {p} outside (0, 1]")));
    }
    match unit {
        SampleUnit::Pairs => {
            let cands = candidate_pairs(dialogues);
            if cands.is_empty() {
                return Err(Error::invalid("target corpus has no system responses"));
            }
            let n = sample_count(p, cands.len());
            let mut order: Vec<usize> = (0..cands.len()).collect();
            rng.shuffle(&mut order);
            Ok(order[..n].iter().map(|&i| cands[i].clone()).collect())
        }
        SampleUnit::Dialogues => {
            if dialogues.is_empty() {
                return Err(Error::invalid("target corpus is empty"));
            }
            let n = sample_count(p, dialogues.len());
            let mut order: Vec<usize> = (0..dialogues.len()).collect();
            rng.shuffle(&mut order);
            Ok(order[..n]
                .iter()
                .flat_map(|&i| dialogue_pairs(&dialogues[i], i))
                .collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Excluded {
    pub kept: Vec<Dialogue>,
    pub removed: usize,
}

/// Drop every dialogue whose domain is in `blocklist` (case-insensitive).
pub fn exclude_domains(dialogues: &[Dialogue], blocklist: &[String]) -> Excluded {
    let block: Vec<String> = blocklist.iter().map(|b| b.to_lowercase()).collect();
    let kept: Vec<Dialogue> = dialogues
        .iter()
        .filter(|d| !block.contains(&d.domain.to_lowercase()))
        .cloned()
        .collect();
    let removed = dialogues.len() - kept.len();
    if kept.is_empty() && !dialogues.is_empty() {
        log::warn!("domain exclusion removed all {removed} dialogues");
    }
    Excluded { kept, removed }
}

/// Every utterance with its neighbours, for the latent-action models.
/// KB pseudo-turns are not included.
pub fn utterance_triples(dialogues: &[Dialogue]) -> Vec<Triple> {
    let mut out = Vec::new();
    for d in dialogues {
        let n = d.turns.len();
        for i in 0..n {
            out.push(Triple {
                domain: d.domain.to_lowercase(),
                prev: (i > 0).then(|| turn_utterance(d, i - 1)),
                mid: turn_utterance(d, i),
                next: (i + 1 < n).then(|| turn_utterance(d, i + 1)),
                intent: intent_of(d, i),
            });
        }
    }
    out
}

fn intent_of(d: &Dialogue, i: usize) -> Option<String> {
    d.turns[i]
        .annotation
        .as_ref()?
        .iter()
        .find(|(s, _)| s == "intent")
        .map(|(_, v)| v.clone())
}

/// Annotated system utterances for the domain-description objective, and
/// the number of system turns that had no annotation.
pub fn description_examples(dialogues: &[Dialogue]) -> (Vec<DescriptionExample>, usize) {
    let mut out = Vec::new();
    let mut missing = 0;
    for d in dialogues {
        for (i, t) in d.turns.iter().enumerate() {
            if t.speaker != Speaker::Sys {
                continue;
            }
            match &t.annotation {
                Some(a) if !a.is_empty() => {
                    let annotation = a
                        .iter()
                        .flat_map(|(s, v)| tokenize(s).into_iter().chain(tokenize(v)))
                        .collect();
                    out.push(DescriptionExample {
                        domain: d.domain.to_lowercase(),
                        annotation,
                        utterance: turn_utterance(d, i),
                    });
                }
                _ => missing += 1,
            }
        }
    }
    (out, missing)
}
