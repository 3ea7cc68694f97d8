use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use localrank::commands::{run, Cli};
use localrank::Error;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let stderr = io::stderr();
    let result = run(cli, &mut stdout.lock(), &mut stderr.lock());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e}");
            match e {
                Error::Diverged { .. } => ExitCode::from(3),
                Error::InvalidArgument { .. } | Error::InvalidConfig { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
