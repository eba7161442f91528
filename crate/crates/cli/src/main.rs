use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use stackgrid_cli::error::{EXIT_INPUT, EXIT_OK};
use stackgrid_cli::{run, Cli, CliError};

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("STACKGRID_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Input(format!(
                "STACKGRID_THREADS = `{value}` is not a positive integer"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Input(format!("cannot configure thread pool: {e}")))
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => exit(EXIT_OK),
                _ => exit(EXIT_INPUT),
            };
        }
    };
    let result = configure_threads().and_then(|()| run(cli));
    match result {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.exit_code())
        }
    }
}
