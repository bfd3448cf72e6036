//! Command-line orchestration for the few-shot dialogue generator: config
//! and checkpoint formats, the shared training/evaluation pipeline and one
//! module per subcommand.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use commands::run;
pub use config::RunConfig;
pub use error::{CliError, CliResult};
