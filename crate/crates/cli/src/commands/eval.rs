use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use fsdg_core::corpus::load_lexicon;
use fsdg_core::eval::{aggregate_runs, EvalReport, Prediction, RunScores};
use fsdg_core::par::map_tasks;
use serde::Serialize;

use super::train::{load_sources, load_target};
use super::{announce, effective_config, ensure_dir, load_corpus, write_json, write_jsonl, Cli};
use crate::checkpoint::load_fsdg;
use crate::config::EvalMode;
use crate::error::{CliError, CliResult};
use crate::pipeline::{predict, protocol_run, score_by_domain};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Test corpus.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Entity lexicon (JSONL); Entity F1 is omitted without one.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// full: re-sample and re-train per run; fast: re-decode the checkpoint.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<EvalMode>,
}

fn parse_mode(s: &str) -> Result<EvalMode, String> {
    match s {
        "full" => Ok(EvalMode::Full),
        "fast" => Ok(EvalMode::Fast),
        _ => Err(format!("unknown mode `{s}` (full or fast)")),
    }
}

#[derive(Serialize)]
struct RunLine<'a> {
    run: usize,
    domain: &'a str,
    bleu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    entity_f1: Option<f64>,
}

/// Run `runs` independent scorings, possibly in parallel, and aggregate
/// them. `score(run)` returns per-domain scores plus any per-run payload.
pub fn evaluate_runs<X, F>(
    runs: usize,
    mode: &str,
    score: F,
) -> CliResult<(EvalReport, Vec<BTreeMap<String, RunScores>>, Vec<X>)>
where
    X: Send,
    F: Fn(usize) -> fsdg_core::Result<(BTreeMap<String, RunScores>, X)> + Send + Sync,
{
    if runs == 0 {
        return Err(CliError::Usage("at least one run is required".into()));
    }
    let results = map_tasks(runs, score);
    let mut scores = Vec::with_capacity(runs);
    let mut extra = Vec::with_capacity(runs);
    for r in results {
        let (s, x) = r?;
        for (d, v) in &s {
            if !v.bleu.is_finite() || v.entity_f1.is_some_and(|f| !f.is_finite()) {
                return Err(CliError::Numerical(format!("non-finite score for domain {d}")));
            }
        }
        scores.push(s);
        extra.push(x);
    }
    let report = aggregate_runs(&scores, mode)?;
    if runs == 1 {
        log::warn!("single run: variances are reported as 0");
    }
    Ok((report, scores, extra))
}

pub(super) fn run(cli: &Cli, args: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let (model, ck_cfg) = load_fsdg(&args.checkpoint)?;
    let mut cfg = effective_config(cli, Some(ck_cfg))?;
    if let Some(t) = &args.test {
        cfg.paths.test = Some(t.clone());
    }
    if let Some(l) = &args.lexicon {
        cfg.paths.lexicon = Some(l.clone());
    }
    if let Some(r) = args.runs {
        cfg.eval.runs = r;
    }
    if let Some(m) = args.mode {
        cfg.eval.mode = m;
    }
    announce(&cfg, err)?;
    let test_path = cfg
        .paths
        .test
        .clone()
        .ok_or_else(|| CliError::Usage("no test corpus given (--test)".into()))?;
    let test = load_corpus(&test_path)?;
    let lexicon = match &cfg.paths.lexicon {
        Some(p) if p.exists() => Some(load_lexicon(p)?),
        Some(p) => {
            log::warn!("lexicon {} not found; Entity F1 omitted", p.display());
            writeln!(err, "warning: lexicon {} not found; Entity F1 omitted", p.display())?;
            None
        }
        None => {
            writeln!(err, "warning: no lexicon; Entity F1 omitted")?;
            None
        }
    };
    let lex = lexicon.as_deref();
    let max_len = cfg.max_response_len;
    let bleu = cfg.eval.bleu;
    let (report, scores, preds): (EvalReport, _, Vec<Vec<Prediction>>) = match cfg.eval.mode {
        EvalMode::Fast => evaluate_runs(cfg.eval.runs, "fast", |_| {
            let p = predict(&model, &test, max_len, 64)?;
            Ok((score_by_domain(&p, lex, &bleu)?, p))
        })?,
        EvalMode::Full => {
            let source = load_sources(&cfg)?;
            let target = load_target(&cfg)?;
            let cfg = &cfg;
            evaluate_runs(cfg.eval.runs, "full", |r| {
                let (_, trained) = protocol_run(cfg, &source, &target, model.aux.clone(), r)?;
                let p = predict(&trained.model, &test, max_len, 64)?;
                Ok((score_by_domain(&p, lex, &bleu)?, p))
            })?
        }
    };
    ensure_dir(&cli.out)?;
    write_json(&cli.out.join("eval_report.json"), &report)?;
    let lines: Vec<RunLine> = scores
        .iter()
        .enumerate()
        .flat_map(|(run, s)| {
            s.iter().map(move |(d, v)| RunLine {
                run,
                domain: d,
                bleu: v.bleu,
                entity_f1: v.entity_f1,
            })
        })
        .collect();
    write_jsonl(&cli.out.join("run_scores.jsonl"), &lines)?;
    write_jsonl(&cli.out.join("predictions.jsonl"), &preds[0])?;
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
