use std::io::IsTerminal;
use std::process::ExitCode;

use clap::Parser;
use propensity_cli::args::Cli;
use propensity_cli::commands;
use propensity_cli::failure::{EXIT_OK, EXIT_USAGE};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let Ok(level) = cli.log.parse::<tracing::Level>() else {
        eprintln!("usage error: unknown log level '{}'", cli.log);
        return ExitCode::from(EXIT_USAGE);
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
