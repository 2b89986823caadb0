// SPDX-License-Identifier: MIT OR Apache-2.0

//! `lfnr`: detection, simulation, calibration and verification from the
//! command line.
//!
//! Exit codes: 0 success, 1 usage or invalid parameters, 2 data, I/O or
//! checkpoint errors, 3 verification failure.

#![forbid(unsafe_code)]

mod args;
mod commands;
mod config;
mod input;

use std::ffi::OsString;
use std::process::ExitCode;

use anyhow::Result;
use clap::{CommandFactory, Parser};

use args::Cli;
use commands::{Usage, VerifyFailed};
use lfnr_core::Error;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if cause.is::<VerifyFailed>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InvalidParameter { .. } | Error::Unsupported(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn parse(argv: &[OsString]) -> std::result::Result<Cli, ExitCode> {
    Cli::try_parse_from(argv).map_err(|e| {
        let _ = e.print();
        ExitCode::from(if e.use_stderr() { 1 } else { 0 })
    })
}

/// Long flag names (and positionals) accepted by `subcommand`.
fn accepted_keys(subcommand: &str) -> Vec<String> {
    let cmd = Cli::command();
    let Some(sub) = cmd.find_subcommand(subcommand) else {
        return Vec::new();
    };
    sub.get_arguments()
        .map(|a| a.get_long().map_or_else(|| a.get_id().to_string(), str::to_string))
        .collect()
}

fn run(argv: Vec<OsString>) -> std::result::Result<(), ExitCode> {
    let mut cli = parse(&argv)?;
    if let Some(path) = cli.config.clone() {
        let name = cli.command.name();
        let keys = accepted_keys(name);
        let extra = config::flags_from_file(&path, name, |k| keys.iter().any(|a| a == k)).map_err(|e| {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        })?;
        cli = parse(&config::splice(&argv, name, extra))?;
    }
    if let Err(e) = init_threads(cli.threads).and_then(|()| commands::dispatch(cli)) {
        eprintln!("error: {e:#}");
        return Err(ExitCode::from(exit_code(&e)));
    }
    Ok(())
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
