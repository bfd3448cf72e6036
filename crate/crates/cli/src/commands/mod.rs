mod chat;
mod eval;
mod inspect;
mod pretrain;
mod synth;
mod train;

pub use chat::{chat_loop, ChatArgs};
pub use eval::{evaluate_runs, EvalArgs};
pub use inspect::InspectArgs;
pub use pretrain::PretrainArgs;
pub use synth::SynthArgs;
pub use train::TrainArgs;

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "fsdg",
    version,
    about = "Few-shot dialogue generation with latent-action transfer"
)]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus from a JSON spec.
    Synth(SynthArgs),
    /// Pre-train latent-action models on a transfer corpus.
    Pretrain(PretrainArgs),
    /// Train a response generator.
    Train(TrainArgs),
    /// Score a checkpoint over several runs.
    Eval(EvalArgs),
    /// Interactive text chat with a checkpoint.
    Chat(ChatArgs),
    /// Report latent codes of a corpus.
    InspectLatent(InspectArgs),
}

/// The config file (or `base`) with the common flags applied. Commands apply
/// their own flags, then call [`announce`].
pub(crate) fn effective_config(cli: &Cli, base: Option<RunConfig>) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => base.unwrap_or_default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub(crate) fn announce(cfg: &RunConfig, err: &mut dyn Write) -> CliResult<()> {
    cfg.validate()?;
    writeln!(err, "effective config: {}", serde_json::to_string(cfg)?)?;
    Ok(())
}

pub(crate) fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> CliResult<()> {
    let mut s = String::new();
    for i in items {
        s.push_str(&serde_json::to_string(i)?);
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn load_corpus(path: &Path) -> CliResult<Vec<fsdg_core::corpus::Dialogue>> {
    fsdg_core::corpus::load_corpus(path).map_err(|e| match e {
        fsdg_core::Error::Io(io) => CliError::Data(format!("{}: {io}", path.display())),
        other => other.into(),
    })
}

/// Parse `args` and run the command. Returns the process exit code.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(&cli, input, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Synth(a) => synth::run(cli, a, out, err),
        Command::Pretrain(a) => pretrain::run(cli, a, out, err),
        Command::Train(a) => train::run(cli, a, out, err),
        Command::Eval(a) => eval::run(cli, a, out, err),
        Command::Chat(a) => chat::run(cli, a, input, out, err),
        Command::InspectLatent(a) => inspect::run(cli, a, out, err),
    }
}
