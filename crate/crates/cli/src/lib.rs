//! Command-line front end: instance files, run reports and experiment
//! orchestration over the `dpfair` library.

pub mod args;
pub mod instance;
pub mod report;
pub mod run;

use std::process::ExitCode;

use clap::Parser;

/// Exit status for a failed audit or invariant check.
pub const EXIT_AUDIT_FAILURE: u8 = 1;
/// Exit status for usage, parse and parameter errors.
pub const EXIT_USAGE: u8 = 2;

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let output = match run::execute(&cli) {
        Ok(output) => output,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let written = match &cli.global.out {
        Some(path) => std::fs::write(path, &output.text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{}", output.text);
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    if output.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_AUDIT_FAILURE)
    }
}
