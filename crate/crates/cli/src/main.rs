use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use pcm_cli::{run, Cli, EXIT_USAGE};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.stdout.as_bytes());
            ExitCode::from(out.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("pcm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
