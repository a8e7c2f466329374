//! `clickcfa`: command-line front end for the CFA prediction pipeline.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 training divergence.

mod args;
mod config;
mod failure;
mod run;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            if informational {
                return ExitCode::SUCCESS;
            }
            if !matches!(e.kind(), ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                eprintln!("\n{}", Cli::command().render_help());
            }
            return ExitCode::from(1);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let root = run::out_root(cli.out_root.as_deref());
    let result = match &cli.command {
        Command::Generate(a) => config::resolve_generate(a).and_then(|cfg| run::execute(&root, &cfg)),
        c @ (Command::Parse(a)
        | Command::Pretrain(a)
        | Command::Train(a)
        | Command::Evaluate(a)
        | Command::Sweep(a)
        | Command::Analyze(a)) => config::resolve_common(c.name(), a).and_then(|cfg| run::execute(&root, &cfg)),
    };
    match result {
        Ok(dir) => {
            println!("run directory: {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("clickcfa {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
