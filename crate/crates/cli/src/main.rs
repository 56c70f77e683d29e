mod args;
mod commands;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, Format};
use commands::Ctx;

#[derive(Debug)]
pub enum CliError {
    Core(forest_core::Error),
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numeric() => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(msg) => f.write_str(msg),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default = if matches!(cli.command, Command::Trace(_)) {
        Format::Csv
    } else {
        Format::Text
    };
    let format = if cli.json {
        Format::Json
    } else {
        cli.format.unwrap_or(default)
    };
    let ctx = Ctx {
        format,
        precision: cli.precision,
    };

    let result = match &cli.command {
        Command::Bound(a) => commands::bound(&ctx, a),
        Command::Table(a) => commands::table_cmd(&ctx, a),
        Command::Trace(a) => commands::trace(&ctx, a),
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Oracle(a) => commands::oracle(&ctx, a),
    };
    match result {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            if stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .is_err()
            {
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
