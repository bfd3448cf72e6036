use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use fsdg_core::corpus::{candidate_pairs, Dialogue};
use fsdg_core::fsdg::FsdgVariant;
use fsdg_core::latent::LatentModel;
use serde_json::json;

use super::{announce, effective_config, ensure_dir, load_corpus, write_jsonl, Cli};
use crate::checkpoint::{load_latent, save_fsdg};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::protocol_run;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Source-domain corpora.
    #[arg(long, num_args = 1..)]
    pub source: Vec<PathBuf>,
    /// Target-domain training pool for the seed set.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Seed fraction of target pairs.
    #[arg(long)]
    pub p: Option<f64>,
    /// fsdg, fsdg+vae or fsdg+laed.
    #[arg(long)]
    pub variant: Option<FsdgVariant>,
    /// Latent checkpoints, in encoder order.
    #[arg(long, num_args = 1..)]
    pub latent: Vec<PathBuf>,
}

pub(crate) fn load_sources(cfg: &RunConfig) -> CliResult<Vec<Dialogue>> {
    if cfg.paths.source.is_empty() {
        return Err(CliError::Usage("no source corpora given (--source)".into()));
    }
    let mut all = Vec::new();
    for p in &cfg.paths.source {
        all.extend(load_corpus(p)?);
    }
    Ok(all)
}

pub(crate) fn load_target(cfg: &RunConfig) -> CliResult<Vec<Dialogue>> {
    let p = cfg
        .paths
        .target
        .as_ref()
        .ok_or_else(|| CliError::Usage("no target corpus given (--target)".into()))?;
    load_corpus(p)
}

pub(crate) fn load_latents(cfg: &RunConfig) -> CliResult<Vec<LatentModel>> {
    let want = cfg.model.variant.auxiliary();
    if cfg.paths.latent.len() != want.len() {
        return Err(CliError::Usage(format!(
            "variant {} needs {} latent checkpoint(s) ({:?}), got {}",
            cfg.model.variant.name(),
            want.len(),
            want,
            cfg.paths.latent.len()
        )));
    }
    cfg.paths.latent.iter().map(|p| Ok(load_latent(p)?.0)).collect()
}

pub(super) fn run(cli: &Cli, args: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let mut cfg = effective_config(cli, None)?;
    if !args.source.is_empty() {
        cfg.paths.source = args.source.clone();
    }
    if let Some(t) = &args.target {
        cfg.paths.target = Some(t.clone());
    }
    if let Some(p) = args.p {
        cfg.seed_fraction = p;
    }
    if let Some(v) = args.variant {
        cfg.model.variant = v;
    }
    if !args.latent.is_empty() {
        cfg.paths.latent = args.latent.clone();
    }
    announce(&cfg, err)?;
    let latent = load_latents(&cfg)?;
    let source = load_sources(&cfg)?;
    let target = load_target(&cfg)?;
    let candidates = candidate_pairs(&target).len();
    let (seeds, trained) = protocol_run(&cfg, &source, &target, latent, 0)?;
    writeln!(err, "seed set: {} of {} target pairs", seeds.len(), candidates)?;
    ensure_dir(&cli.out)?;
    save_fsdg(&cli.out.join("model.ckpt"), &trained.model, &cfg)?;
    write_jsonl(&cli.out.join("train_log.jsonl"), &trained.log)?;
    write_jsonl(&cli.out.join("seed_set.jsonl"), &seeds)?;
    let report = json!({
        "variant": cfg.model.variant,
        "seed_fraction": cfg.seed_fraction,
        "candidate_pairs": candidates,
        "seed_pairs": seeds.len(),
        "vocabulary": trained.model.vocab.len(),
        "summary": trained.summary,
        "final_loss": trained.log.last().map(|l| l.loss),
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
