//! Command-line front end for the planning evaluation toolkit.

mod commands;
mod config;
mod factory;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{GenArgs, PromptArgs, ReportArgs, RunArgs, ValidateArgs};

#[derive(Parser)]
#[command(
    name = "planeval",
    version,
    about = "Plan generation and verification experiments on Blocksworld"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a suite of random Blocksworld instances
    Gen(GenArgs),
    /// Check a plan against a problem and print the diagnosis
    Validate(ValidateArgs),
    /// Render a prompt to files for inspection
    Prompt(PromptArgs),
    /// Execute an experiment described by a config file
    Run(RunArgs),
    /// Summarize a finished run
    Report(ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => commands::cmd_gen(&args),
        Command::Validate(args) => return commands::cmd_validate(&args),
        Command::Prompt(args) => commands::cmd_prompt(&args),
        Command::Run(args) => commands::cmd_run(&args),
        Command::Report(args) => commands::cmd_report(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
