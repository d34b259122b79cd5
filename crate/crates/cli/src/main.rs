mod args;
mod model;
mod run;

use std::process::ExitCode;

use chaos_core::Error as CoreError;
use clap::Parser;

use args::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 1 for bad invocations, 2 for unreadable or invalid data, 3 for
    /// failures while running.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e {
                CoreError::Config { .. } | CoreError::Argument(_) => 1,
                CoreError::Parse { .. }
                | CoreError::Format { .. }
                | CoreError::Length { .. }
                | CoreError::Data(_)
                | CoreError::Label { .. }
                | CoreError::Io { .. } => 2,
                _ => 3,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train(a) => run::cmd_train(&a),
        Command::Bench(a) => run::cmd_bench(&a),
        Command::Model(m) => model::cmd_model(&m),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
