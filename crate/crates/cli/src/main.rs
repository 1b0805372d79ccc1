use std::process::ExitCode;

use clap::Parser;
use keytone_cli::cli::Cli;

fn main() -> ExitCode {
    keytone_cli::cli::main(Cli::parse())
}
