use std::process::ExitCode;

use avrel_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    // usage errors exit with status 2 from inside the parser
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match run(&cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
