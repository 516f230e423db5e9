use std::process::ExitCode;

use clap::Parser;
use growkit::cli::{run, Cli};

fn main() -> ExitCode {
    run(Cli::parse())
}
