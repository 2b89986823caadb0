// SPDX-License-Identifier: MIT OR Apache-2.0

//! Config files are flat `key = value` lists. Keys before any section apply
//! to every subcommand; keys under `[detect]`, `[simulate]`, `[calibrate]`
//! or `[verify]` apply to that subcommand only. Each key is the long flag
//! name (`theta`, `calibration-n`, ...; underscores are accepted).
//!
//! The file is turned into flags placed in front of the user's own, and
//! since later flags win, the command line overrides the file.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{Context, Result};
use ini::Ini;

const SECTIONS: [&str; 4] = ["detect", "simulate", "calibrate", "verify"];

/// Flags contributed by `path` for `subcommand`; `accepts` tells which
/// general keys the subcommand understands.
pub fn flags_from_file(path: &Path, subcommand: &str, accepts: impl Fn(&str) -> bool) -> Result<Vec<OsString>> {
    let ini = Ini::load_from_file(path).with_context(|| format!("reading config file {}", path.display()))?;
    for (section, _) in ini.iter() {
        if let Some(name) = section {
            anyhow::ensure!(
                SECTIONS.contains(&name),
                "config file {}: unknown section [{name}]",
                path.display()
            );
        }
    }
    let mut flags = Vec::new();
    let general = ini.general_section().iter().map(|kv| (true, kv));
    let specific = ini.section(Some(subcommand)).into_iter().flat_map(|s| s.iter()).map(|kv| (false, kv));
    for (shared, (key, value)) in general.chain(specific) {
        let key = key.trim().replace('_', "-");
        if shared && !accepts(&key) {
            continue;
        }
        anyhow::ensure!(key != "config", "config files cannot include other config files");
        if key == "suite" {
            flags.push(OsString::from(value.trim()));
        } else {
            flags.push(OsString::from(format!("--{key}={}", value.trim())));
        }
    }
    Ok(flags)
}

/// Inserts `extra` right after the subcommand token in `argv`.
pub fn splice(argv: &[OsString], subcommand: &str, extra: Vec<OsString>) -> Vec<OsString> {
    let at = argv
        .iter()
        .skip(1)
        .position(|a| a == subcommand)
        .map_or(argv.len(), |p| p + 2);
    let mut out = argv[..at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[at..]);
    out
}
