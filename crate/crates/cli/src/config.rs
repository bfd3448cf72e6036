use std::path::{Path, PathBuf};

use fsdg_core::corpus::SampleUnit;
use fsdg_core::eval::BleuConfig;
use fsdg_core::fsdg::{FsdgConfig, TrainConfig};
use fsdg_core::latent::{LaedConfig, PretrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Re-sample the seed set and re-train for every run.
    #[default]
    Full,
    /// Re-decode the given checkpoint for every run.
    Fast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub runs: usize,
    pub mode: EvalMode,
    pub bleu: BleuConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            runs: 10,
            mode: EvalMode::Full,
            bleu: BleuConfig::default(),
        }
    }
}

/// Input and output locations. Relative paths resolve against the working
/// directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Latent pre-training corpus.
    pub transfer: Option<PathBuf>,
    /// Source-domain corpora for response-generator training.
    pub source: Vec<PathBuf>,
    /// Target-domain training pool the seed set is drawn from.
    pub target: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    /// Latent checkpoints in encoder order.
    pub latent: Vec<PathBuf>,
    /// Domains removed before latent pre-training.
    pub blocklist: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: FsdgConfig,
    /// Shared by every latent model; the variant field is set per model.
    pub latent: LaedConfig,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
    /// Fraction of target pairs used as the seed set.
    pub seed_fraction: f64,
    pub sample_unit: SampleUnit,
    pub seed: u64,
    pub min_freq: usize,
    pub max_response_len: usize,
    pub eval: EvalConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: FsdgConfig::default(),
            latent: LaedConfig::default(),
            pretrain: PretrainConfig::default(),
            train: TrainConfig::default(),
            seed_fraction: 0.05,
            sample_unit: SampleUnit::Pairs,
            seed: 0,
            min_freq: 1,
            max_response_len: 30,
            eval: EvalConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.latent.validate()?;
        self.train.validate()?;
        if !(self.seed_fraction > 0.0 && self.seed_fraction <= 1.0) {
            return Err(CliError::Usage(format!(
                "seed_fraction must lie in (0, 1], got {}",
                self.seed_fraction
            )));
        }
        if self.eval.runs == 0 {
            return Err(CliError::Usage("eval.runs must be at least 1".into()));
        }
        if self.max_response_len == 0 {
            return Err(CliError::Usage("max_response_len must be positive".into()));
        }
        if self.pretrain.batch_size == 0 {
            return Err(CliError::Usage("pretrain.batch_size must be positive".into()));
        }
        self.note_departures();
        Ok(())
    }

    /// Warn about sizes that differ from the reference setup.
    fn note_departures(&self) {
        let reference = [
            ("model.utt_hidden", self.model.utt_hidden as f64, 256.0),
            ("model.ctx_hidden", self.model.ctx_hidden as f64, 512.0),
            ("train.adam.lr", self.train.adam.lr, 0.001),
            ("latent.latent.m", self.latent.latent.m as f64, 10.0),
            ("latent.latent.k", self.latent.latent.k as f64, 5.0),
        ];
        for (name, got, want) in reference {
            if got != want {
                log::warn!("{name} = {got} differs from the reference value {want}");
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
