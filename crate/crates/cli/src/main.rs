use std::fs;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use hedgekit_cli::{run, Cli, CliError, RunConfig};

fn fail(error: &CliError) -> ExitCode {
    eprintln!("hedgekit: error: {error}");
    ExitCode::from(error.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // clap's first line names the offending flag; usage text follows.
            let rendered = e.to_string();
            let line = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("hedgekit: {}", line.trim());
            return ExitCode::from(2);
        }
    };
    let config = match RunConfig::from_cli(cli) {
        Ok(config) => config,
        Err(e) => return fail(&e),
    };
    let report = match run(&config) {
        Ok(report) => report,
        Err(e) => return fail(&e),
    };
    match &config.out {
        Some(path) => {
            if let Err(e) = fs::write(path, report) {
                return fail(&CliError::Io(format!("cannot write {}: {e}", path.display())));
            }
        }
        None => print!("{report}"),
    }
    ExitCode::SUCCESS
}
