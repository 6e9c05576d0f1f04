//! Command-line driver and session service.

pub mod cli;
pub mod commands;
pub mod config;
pub mod curve;
pub mod error;
pub mod manifest;
pub mod service;

use clap::Parser;

use cli::{Cli, Command};
use error::{CliError, CliResult};

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Infer(a) => commands::infer(&a),
        Command::EvalBudget(a) => commands::eval_budget(&a),
        Command::QueryImplicit(a) => commands::query_implicit(&a),
        Command::Serve(a) => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io(&a.data_dir, e))?;
            runtime.block_on(service::serve(a.port, &a.data_dir))
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}
