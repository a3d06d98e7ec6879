//! Command-line front end for fitting, simulation studies, prior elicitation
//! and posterior summaries.
//!
//! Every subcommand writes its outputs plus a `manifest_<command>.json`
//! recording the resolved configuration, the seed, the exact argument list
//! needed to replay the run, and SHA-256 digests of every file written.

mod args;
mod elicit;
mod fit;
mod manifest;
mod predicate;
mod simulate;
mod summarize;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;

pub use args::{
    Cli, Command, CommonArgs, DataArgs, ElicitArgs, FitArgs, SimulateArgs, SummarizeArgs,
};
pub use elicit::cmd_elicit;
pub use fit::cmd_fit;
pub use manifest::{OutputFile, RunManifest};
pub use predicate::{Predicate, PredicateSet};
pub use simulate::cmd_simulate;
pub use summarize::cmd_summarize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// An error in how the command was invoked rather than in running it.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let argv: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(&a, &argv).map(|_| ()),
        Command::Simulate(a) => cmd_simulate(&a, &argv).map(|_| ()),
        Command::Elicit(a) => cmd_elicit(&a, &argv).map(|_| ()),
        Command::Summarize(a) => cmd_summarize(&a, &argv).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}
