mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use commands::Failure;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

impl Failure {
    /// 2 usage, 3 no candidates, 4 fingerprint mismatch, 1 anything else.
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Core(silpose::Error::NoCandidates(_)) => 3,
            Failure::Core(silpose::Error::FingerprintMismatch { .. }) => 4,
            Failure::Core(_) | Failure::Other(_) => 1,
        }
    }
}
