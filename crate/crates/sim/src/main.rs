use std::process::ExitCode;

use clap::Parser;
use shef_sim::cli::{main_with, Cli};

fn main() -> ExitCode {
    main_with(Cli::parse())
}
