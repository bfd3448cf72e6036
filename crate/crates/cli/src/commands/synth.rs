use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use fsdg_core::corpus::{generate_synthetic_corpus, get_stats, save_corpus, save_lexicon, synth::SynthSpec};
use fsdg_core::rng::Rng;
use serde_json::json;

use super::{announce, effective_config, ensure_dir, Cli};
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
}

pub(super) fn run(cli: &Cli, args: &SynthArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let cfg = effective_config(cli, None)?;
    announce(&cfg, err)?;
    let text =
        std::fs::read_to_string(&args.spec).map_err(|e| CliError::Data(format!("{}: {e}", args.spec.display())))?;
    let spec: SynthSpec =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", args.spec.display())))?;
    let corpus =
        generate_synthetic_corpus(&spec, &mut Rng::seed(cfg.seed)).map_err(|e| CliError::Data(e.to_string()))?;
    ensure_dir(&cli.out)?;
    save_corpus(&cli.out.join("transfer.jsonl"), &corpus.transfer)?;
    if !corpus.source.is_empty() {
        save_corpus(&cli.out.join("source.jsonl"), &corpus.source)?;
    }
    let mut targets = serde_json::Map::new();
    for t in &corpus.targets {
        save_corpus(&cli.out.join(format!("{}.train.jsonl", t.domain)), &t.train)?;
        save_corpus(&cli.out.join(format!("{}.test.jsonl", t.domain)), &t.test)?;
        save_lexicon(&cli.out.join(format!("{}.lexicon.jsonl", t.domain)), &t.lexicon)?;
        targets.insert(
            t.domain.clone(),
            json!({"train": t.train.len(), "test": t.test.len(), "lexicon": t.lexicon.len()}),
        );
    }
    let report = json!({
        "transfer": get_stats(&corpus.transfer),
        "source": get_stats(&corpus.source),
        "targets": targets,
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
