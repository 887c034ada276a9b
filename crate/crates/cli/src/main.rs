//! `arbor` — generate corpora, train tree parsers, evaluate, and parse.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/runtime error.

mod commands;
mod config;

use clap::Parser;

use commands::CliError;

#[derive(Parser)]
#[command(
    name = "arbor",
    about = "Instruction-to-action-tree parsing toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: config::Command,
}

fn main() {
    // Die quietly when stdout is a closed pipe (`arbor eval | head`)
    // instead of panicking mid-report.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems (including --help/--version) exit 1 per the
            // documented convention, except help/version themselves.
            use clap::error::ErrorKind;
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            std::process::exit(code);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
