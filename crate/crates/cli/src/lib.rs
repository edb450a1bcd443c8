//! Command-line front end: flag parsing, dispatch to the engines and
//! artifact output.

pub mod commands;
pub mod config;
pub mod output;

use serde::Serialize;

pub use commands::{dispatch, Artifact, CliError};
pub use config::{parse_config, ParseOutcome, RunConfig, UsageError};

/// ISO-8601 UTC timestamp, second precision.
pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[derive(Debug, Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

/// One-line JSON error report for standard error.
pub fn error_json(kind: &str, message: impl std::fmt::Display) -> String {
    serde_json::to_string(&ErrorReport { error: kind, message: message.to_string() }).expect("string fields")
}

/// Full run; returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match parse_config(argv) {
        Ok(c) => c,
        Err(ParseOutcome::Clap(e)) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
        Err(ParseOutcome::Usage(e)) => {
            eprintln!("{}", error_json("UsageError", &e));
            return 2;
        }
    };
    if config.threads > 0 {
        // fails only if a pool already exists, which then stays in charge
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build_global();
    }
    let result = dispatch(&config, &timestamp()).and_then(|artifacts| {
        let dest = output::destination(config.out.as_deref(), output::env_out_dir(), artifacts.len());
        output::emit(&artifacts, &dest)
    });
    match result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e));
            e.exit_code()
        }
    }
}
