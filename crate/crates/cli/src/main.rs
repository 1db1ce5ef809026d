use std::process::ExitCode;

use cbe_cli::{run, Cli, EXIT_CONFIG};
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    match run(&cli) {
        Ok((manifest, code)) => {
            for c in &manifest.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("wrote {} files and manifest.json to {}", manifest.outputs.len(), cli.out_dir.display());
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("cbe: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
