use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use sectrain_client::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(body) => {
            match &cli.out {
                Some(p) => eprintln!("wrote {}", p.display()),
                None => {
                    let _ = std::io::stdout().write_all(body.as_bytes());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sectrain: {e:#}");
            ExitCode::FAILURE
        }
    }
}
