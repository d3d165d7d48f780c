use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use walkref_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.stdout.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::from(out.exit as u8)
        }
        Err(e) => {
            eprintln!("walkref: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
