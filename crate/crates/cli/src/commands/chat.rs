use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::Args;
use fsdg_core::corpus::{serialize_kb, tokenize, KbRecord, Role, Utterance};
use fsdg_core::fsdg::FsdgModel;

use super::{announce, effective_config, Cli};
use crate::checkpoint::load_fsdg;
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Domain name the conversation belongs to.
    #[arg(long)]
    pub domain: String,
    /// KB records as a JSON array of objects.
    #[arg(long)]
    pub kb: Option<PathBuf>,
}

/// Answer every non-empty input line with a greedy response, keeping the
/// running context. Returns the number of exchanges.
pub fn chat_loop(
    model: &FsdgModel,
    domain: &str,
    kb: &[KbRecord],
    max_len: usize,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> CliResult<usize> {
    let domain = domain.to_lowercase();
    model
        .vocab
        .domain_id(&domain)
        .map_err(|_| CliError::Data(format!("unknown domain `{domain}`")))?;
    let mut context = Vec::new();
    if !kb.is_empty() {
        context.push(Utterance {
            role: Role::Kb,
            tokens: serialize_kb(kb).split_whitespace().map(str::to_string).collect(),
        });
    }
    let mut exchanges = 0;
    for line in input.lines() {
        let line = line?;
        let tokens = tokenize(&line);
        if tokens.is_empty() {
            continue;
        }
        context.push(Utterance {
            role: Role::Usr,
            tokens,
        });
        let reply = model.generate_response(&context, &domain, max_len)?;
        writeln!(output, "{}", reply.join(" "))?;
        output.flush()?;
        context.push(Utterance {
            role: Role::Sys,
            tokens: reply,
        });
        exchanges += 1;
    }
    Ok(exchanges)
}

pub(super) fn run(
    cli: &Cli,
    args: &ChatArgs,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let (model, ck_cfg) = load_fsdg(&args.checkpoint)?;
    let cfg = effective_config(cli, Some(ck_cfg))?;
    announce(&cfg, err)?;
    let kb: Vec<KbRecord> = match &args.kb {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?
        }
        None => Vec::new(),
    };
    chat_loop(&model, &args.domain, &kb, cfg.max_response_len, input, out)?;
    Ok(())
}
