use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;

use clap::Parser;
use loophole_lab::commands::{configure_threads, run, Cli};
use loophole_lab::EXIT_INTERNAL;

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, matching config errors.
    let cli = Cli::parse();
    let command: Vec<String> = std::env::args().skip(1).collect();
    let command = command.join(" ");

    let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
        configure_threads().and_then(|()| run(cli, &command))
    }));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("loophole-lab: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
