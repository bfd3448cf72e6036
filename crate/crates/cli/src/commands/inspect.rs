use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use fsdg_core::corpus::utterance_triples;
use fsdg_core::latent::{assign_codes, cluster_purity, posterior_diagnostics};
use fsdg_core::tensor::Tensor;
use serde_json::json;

use super::{announce, effective_config, ensure_dir, load_corpus, write_json, write_jsonl, Cli};
use crate::checkpoint::load_latent;
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Latent-model checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus whose utterances are coded.
    #[arg(long)]
    pub corpus: PathBuf,
}

pub(super) fn run(cli: &Cli, args: &InspectArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let (model, ck_cfg) = load_latent(&args.checkpoint)?;
    let cfg = effective_config(cli, Some(ck_cfg))?;
    announce(&cfg, err)?;
    if !model.variant().is_discrete() {
        return Err(CliError::Usage("inspect-latent needs a discrete latent model".into()));
    }
    let dialogues = load_corpus(&args.corpus)?;
    let triples = utterance_triples(&dialogues);
    if triples.is_empty() {
        return Err(CliError::Data("corpus has no utterances".into()));
    }
    let codes = assign_codes(&model, &triples)?;
    let distinct: BTreeSet<&Vec<usize>> = codes.iter().map(|c| &c.code).collect();
    let labelled: Vec<(&Vec<usize>, &String)> = codes
        .iter()
        .filter_map(|c| c.intent.as_ref().map(|i| (&c.code, i)))
        .collect();
    let purity = if labelled.is_empty() {
        None
    } else {
        let (cl, lb): (Vec<_>, Vec<_>) = labelled.into_iter().unzip();
        Some(cluster_purity(&cl, &lb))
    };
    let batch = model.batch_from_triples(&triples);
    let mut rows = Vec::new();
    for chunk in batch.inputs.chunks(256) {
        rows.extend_from_slice(model.posterior_probs(chunk)?.data());
    }
    let probs = Tensor::matrix(triples.len() * model.m(), model.k(), rows);
    let (kl, mi) = posterior_diagnostics(&probs, model.m(), model.k())?;
    let mut usage: BTreeMap<String, usize> = BTreeMap::new();
    for c in &codes {
        let key = c.code.iter().map(usize::to_string).collect::<Vec<_>>().join("-");
        *usage.entry(key).or_default() += 1;
    }
    let report = json!({
        "model": model.variant(),
        "utterances": codes.len(),
        "distinct_codes": distinct.len(),
        "intent_purity": purity,
        "mutual_information": mi,
        "aggregate_kl": kl,
        "code_usage": usage,
    });
    ensure_dir(&cli.out)?;
    write_json(&cli.out.join("latent_report.json"), &report)?;
    write_jsonl(&cli.out.join("latent_codes.jsonl"), &codes)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
