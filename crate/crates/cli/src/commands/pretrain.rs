use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use fsdg_core::corpus::{exclude_domains, utterance_triples};
use fsdg_core::latent::{assign_codes, LatentVariant};
use fsdg_core::rng::Rng;
use serde_json::json;

use super::{announce, effective_config, ensure_dir, load_corpus, write_jsonl, Cli};
use crate::checkpoint::save_latent;
use crate::error::{CliError, CliResult};
use crate::pipeline::pretrain_latent;

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Transfer corpus (JSONL).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Domains to drop before training, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    /// Models to train, comma separated: di-vae, di-vst, vae.
    #[arg(long, value_delimiter = ',', default_value = "di-vae,di-vst")]
    pub models: Vec<String>,
}

fn parse_variant(s: &str) -> CliResult<LatentVariant> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| CliError::Usage(format!("unknown latent model `{s}`")))
}

pub(super) fn run(cli: &Cli, args: &PretrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let mut cfg = effective_config(cli, None)?;
    if let Some(c) = &args.corpus {
        cfg.paths.transfer = Some(c.clone());
    }
    if !args.exclude.is_empty() {
        cfg.paths.blocklist = args.exclude.clone();
    }
    announce(&cfg, err)?;
    let variants = args
        .models
        .iter()
        .map(|m| parse_variant(m))
        .collect::<CliResult<Vec<_>>>()?;
    let path = cfg
        .paths
        .transfer
        .clone()
        .ok_or_else(|| CliError::Usage("no transfer corpus given (--corpus)".into()))?;
    let dialogues = load_corpus(&path)?;
    let ex = exclude_domains(&dialogues, &cfg.paths.blocklist);
    if ex.kept.is_empty() {
        return Err(CliError::Data(format!(
            "no dialogues left after excluding {:?}",
            cfg.paths.blocklist
        )));
    }
    ensure_dir(&cli.out)?;
    let triples = utterance_triples(&ex.kept);
    let mut written = Vec::new();
    for (i, v) in variants.iter().enumerate() {
        let name = serde_json::to_value(v)?.as_str().unwrap().to_string();
        let mut rng = Rng::derive(cfg.seed, i as u64);
        let (model, log) = pretrain_latent(&cfg, *v, &ex.kept, &mut rng)?;
        let ckpt = cli.out.join(format!("{name}.ckpt"));
        save_latent(&ckpt, &model, &cfg)?;
        write_jsonl(&cli.out.join(format!("{name}.log.jsonl")), &log)?;
        if v.is_discrete() {
            write_jsonl(
                &cli.out.join(format!("{name}.codes.jsonl")),
                &assign_codes(&model, &triples)?,
            )?;
        }
        written.push(
            json!({"model": name, "checkpoint": ckpt, "steps": log.len(), "final_loss": log.last().map(|l| l.loss)}),
        );
    }
    let report = json!({"dialogues": ex.kept.len(), "excluded": ex.removed, "models": written});
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
