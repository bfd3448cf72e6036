//! Dialogue data model, JSONL I/O, vocabulary, KB serialization, seed-set
//! sampling, domain exclusion and the synthetic corpus generator.

mod data;
mod io;
mod kb;
mod lexicon;
mod sampling;
pub mod synth;
mod tokenize;
pub mod vocab;

pub use data::{DescriptionExample, Dialogue, KbRecord, Role, Speaker, TrainingExample, Triple, Turn, Utterance};
pub use io::{get_stats, load_corpus, read_corpus, save_corpus, CorpusStats, DomainStats};
pub use kb::{parse_kb, serialize_kb, KB_MARKER};
pub use lexicon::{lexicon_from_values, load_lexicon, save_lexicon, LexiconEntry};
pub use sampling::{
    candidate_pairs, description_examples, dialogue_pairs, dialogue_utterances, exclude_domains, sample_count,
    sample_seed_set, utterance_triples, Excluded, SampleUnit,
};
pub use synth::{generate_synthetic_corpus, DomainKind, SynthCorpus, SynthSpec, TargetCorpus};
pub use tokenize::{canonicalize, tokenize};
pub use vocab::{build_vocabulary, domain_token, Vocabulary};
