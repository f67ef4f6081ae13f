//! CLI front end: argument parsing, config-file loading, output writing.
//!
//! Usage:
//!
//! ```text
//! pathweight <experiment> [--config FILE] [--seed N] [--k N] [--out PATH]
//!            [--steps N] [--full] [--set key=value ...]
//! ```
//!
//! Exit status: 0 on success, 1 on configuration errors (including
//! unknown experiments and unreadable files), 2 on numerical failures.
//! Errors are printed to stderr with the machine-parsable prefix
//! `ERROR[<code>]:`.

use std::fs;

use clap::{Arg, ArgAction, Command};

use pathweight::harness::{
    self, run_experiment, write_outputs, ExperimentConfig, ExperimentKind, HarnessError,
    ALL_EXPERIMENTS,
};

fn command() -> Command {
    Command::new("pathweight")
        .about("Importance sampling experiments for diffusion path functionals")
        .arg(
            Arg::new("experiment")
                .required(true)
                .help("experiment name (see --list in the README)"),
        )
        .arg(Arg::new("config").long("config").value_name("FILE"))
        .arg(Arg::new("seed").long("seed").value_name("N"))
        .arg(Arg::new("k").long("k").value_name("N"))
        .arg(Arg::new("out").long("out").value_name("PATH"))
        .arg(Arg::new("steps").long("steps").value_name("N"))
        .arg(
            Arg::new("full")
                .long("full")
                .action(ArgAction::SetTrue)
                .help("paper-scale sampling (k >= 10^6)"),
        )
        .arg(
            Arg::new("set")
                .long("set")
                .value_name("KEY=VALUE")
                .action(ArgAction::Append)
                .help("override any config key"),
        )
        .disable_help_flag(false)
}

fn fail(code: &str, message: impl std::fmt::Display, status: i32) -> i32 {
    eprintln!("ERROR[{code}]: {message}");
    status
}

fn classify(err: &HarnessError) -> (&'static str, i32) {
    match err {
        HarnessError::UnknownExperiment(_) | HarnessError::InvalidConfig(_) => ("config", 1),
        HarnessError::Numerical(_) => ("numeric", 2),
        HarnessError::Io(_) => ("io", 1),
    }
}

/// Runs the CLI against an argv vector; returns the process exit status.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let matches = match command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) if e.kind() == clap::error::ErrorKind::DisplayHelp => {
            print!("{e}");
            return 0;
        }
        Err(e) => return fail("config", e.render().ansi(), 1),
    };

    let name = matches.get_one::<String>("experiment").unwrap();
    let kind: ExperimentKind = match name.parse() {
        Ok(k) => k,
        Err(_) => {
            eprintln!(
                "ERROR[config]: unknown experiment '{name}' (known: {})",
                ALL_EXPERIMENTS
                    .iter()
                    .map(|k| k.name())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            return 1;
        }
    };
    let mut cfg = ExperimentConfig::defaults(kind);

    if let Some(path) = matches.get_one::<String>("config") {
        let body = match fs::read_to_string(path) {
            Ok(b) => b,
            Err(e) => return fail("io", format!("cannot read config file {path}: {e}"), 1),
        };
        if let Err(e) = cfg.apply_file(&body) {
            let (code, status) = classify(&e);
            return fail(code, e, status);
        }
    }
    let flag_overrides = [
        ("seed", matches.get_one::<String>("seed")),
        ("k", matches.get_one::<String>("k")),
        ("n_steps", matches.get_one::<String>("steps")),
        ("out_dir", matches.get_one::<String>("out")),
    ];
    for (key, value) in flag_overrides.into_iter() {
        if let Some(v) = value {
            if let Err(e) = cfg.apply_kv(key, v) {
                let (code, status) = classify(&e);
                return fail(code, e, status);
            }
        }
    }
    if matches.get_flag("full") {
        cfg.full = true;
    }
    for kv in matches
        .get_many::<String>("set")
        .map(|v| v.collect::<Vec<_>>())
        .unwrap_or_default()
    {
        let Some((key, value)) = kv.split_once('=') else {
            return fail("config", format!("--set expects key=value, got '{kv}'"), 1);
        };
        if let Err(e) = cfg.apply_kv(key.trim(), value.trim()) {
            let (code, status) = classify(&e);
            return fail(code, e, status);
        }
    }

    let output = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => {
            let (code, status) = classify(&e);
            return fail(code, e, status);
        }
    };
    for row in &output.rows {
        println!("{}", harness::row_line(kind, row));
    }
    match write_outputs(&cfg, &output) {
        Ok((csv, json)) => {
            let failed: Vec<&str> = output
                .summary
                .assertions
                .iter()
                .filter(|a| !a.passed)
                .map(|a| a.name.as_str())
                .collect();
            if failed.is_empty() {
                println!(
                    "wrote {} and {} ({} assertions passed, {} ms)",
                    csv.display(),
                    json.display(),
                    output.summary.assertions.len(),
                    output.summary.runtime_ms
                );
            } else {
                println!(
                    "wrote {} and {} (FAILED assertions: {}, {} ms)",
                    csv.display(),
                    json.display(),
                    failed.join(", "),
                    output.summary.runtime_ms
                );
            }
            0
        }
        Err(e) => {
            let (code, status) = classify(&e);
            fail(code, e, status)
        }
    }
}
