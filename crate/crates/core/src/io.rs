// SPDX-License-Identifier: MIT OR Apache-2.0

//! Self-describing CSV outputs.
//!
//! Each file starts with `# key=value` comment lines carrying everything
//! needed to regenerate it, followed by a header row and the data. Reals
//! are printed in Rust's shortest round-trip form.

use std::io::{BufRead, Write};

use crate::calibrate::Calibration;
use crate::detector::{ThresholdMeta, ThresholdTable};
use crate::simulate::MetricsFrame;
use crate::{Error, Result};

pub const METRICS_HEADER: &str = "t,mean_fnp,se_fnp,mean_lfnr,se_lfnr,mean_active,mean_util,mean_fdp,mean_lfdr,mean_rl,mean_cd";
pub const THRESHOLD_HEADER: &str = "t,lambda,survival_frac,retained_mean";

fn write_meta<W: Write>(out: &mut W, meta: &[(String, String)]) -> Result<()> {
    for (key, value) in meta {
        if key.contains(char::is_whitespace) || value.contains(['\n', '\r']) {
            return Err(Error::Format(format!("metadata entry `{key}` cannot be written on one line")));
        }
        writeln!(out, "# {key}={value}")?;
    }
    Ok(())
}

/// Writes the per-time metrics; row `t` describes the active set `S_t`.
/// Standard errors are `NA` for a single replication.
pub fn write_metrics<W: Write>(out: &mut W, frame: &MetricsFrame, meta: &[(String, String)]) -> Result<()> {
    write_meta(out, meta)?;
    writeln!(out, "# replications={}", frame.replications)?;
    writeln!(out, "# row t: FNP/LFNR of S_t against W at t-1, FDP/LFDR of streams dropped entering t")?;
    writeln!(out, "{METRICS_HEADER}")?;
    let se = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map_or_else(|| "NA".to_string(), |v| v[i].to_string());
    for i in 0..frame.horizon() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            i + 1,
            frame.mean_fnp[i],
            se(&frame.se_fnp, i),
            frame.mean_lfnr[i],
            se(&frame.se_lfnr, i),
            frame.mean_active[i],
            frame.mean_utilization[i],
            frame.mean_fdp[i],
            frame.mean_lfdr[i],
            frame.mean_rl[i],
            frame.mean_cd[i],
        )?;
    }
    Ok(())
}

/// Writes a calibrated table with its provenance.
pub fn write_thresholds<W: Write>(out: &mut W, cal: &Calibration, extra: &[(String, String)]) -> Result<()> {
    if let Some(m) = cal.table.meta() {
        writeln!(out, "# theta={} alpha={} n={} seed={}", m.theta, m.alpha, m.n_streams, m.seed)?;
        writeln!(out, "# model={}", m.fingerprint)?;
    }
    write_meta(out, extra)?;
    writeln!(out, "{THRESHOLD_HEADER}")?;
    for (t, lambda) in cal.table.values().iter().enumerate() {
        writeln!(out, "{t},{lambda},{},{}", cal.survival[t], cal.retained_mean[t])?;
    }
    Ok(())
}

fn field<T: std::str::FromStr>(meta: &[(String, String)], key: &str) -> Result<Option<T>> {
    match meta.iter().find(|(k, _)| k == key) {
        None => Ok(None),
        Some((_, v)) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Format(format!("bad value `{v}` for `{key}`"))),
    }
}

/// Reads a table written by [`write_thresholds`]. Provenance is attached
/// when the metadata block is complete.
pub fn read_thresholds<R: BufRead>(input: R) -> Result<ThresholdTable> {
    let mut meta: Vec<(String, String)> = Vec::new();
    let mut lambda = Vec::new();
    let mut seen_header = false;
    for (row, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            // `model=` values may contain spaces only if they are the sole entry.
            if let Some(model) = comment.trim().strip_prefix("model=") {
                meta.push(("model".into(), model.to_string()));
                continue;
            }
            for pair in comment.split_whitespace() {
                if let Some((k, v)) = pair.split_once('=') {
                    meta.push((k.to_string(), v.to_string()));
                }
            }
            continue;
        }
        if !seen_header {
            if line != THRESHOLD_HEADER {
                return Err(Error::Format(format!("line {}: expected header `{THRESHOLD_HEADER}`", row + 1)));
            }
            seen_header = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format(format!("line {}: malformed row `{line}`", row + 1));
        if cols.len() != 4 {
            return Err(bad());
        }
        let t: usize = cols[0].parse().map_err(|_| bad())?;
        if t != lambda.len() {
            return Err(Error::Format(format!("line {}: expected t={}, found t={t}", row + 1, lambda.len())));
        }
        lambda.push(cols[1].parse::<f64>().map_err(|_| bad())?);
    }
    if !seen_header {
        return Err(Error::Format("threshold file has no header".into()));
    }
    let table = ThresholdTable::new(lambda)?;
    let parts = (
        field::<f64>(&meta, "theta")?,
        field::<f64>(&meta, "alpha")?,
        field::<String>(&meta, "model")?,
        field::<usize>(&meta, "n")?,
        field::<u64>(&meta, "seed")?,
    );
    Ok(match parts {
        (Some(theta), Some(alpha), Some(fingerprint), Some(n_streams), Some(seed)) => table.with_meta(ThresholdMeta {
            theta,
            alpha,
            fingerprint,
            n_streams,
            seed,
        }),
        _ => table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{calibrate_thresholds, CalibrationParams};
    use crate::model::ObservationModel;
    use crate::Execution;

    #[test]
    fn threshold_round_trip() {
        let cal = calibrate_thresholds(
            &CalibrationParams {
                theta: 0.05,
                obs: ObservationModel::gaussian(1.0, 1.0).unwrap(),
                alpha: 0.05,
                n_streams: 2000,
                horizon: 12,
                seed: 3,
            },
            Execution::Sequential,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_thresholds(&mut buf, &cal, &[("horizon".into(), "12".into())]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# theta=0.05 alpha=0.05 n=2000 seed=3\n"));
        let back = read_thresholds(&buf[..]).unwrap();
        assert_eq!(back, cal.table);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(read_thresholds(&b"t,lambda\n0,1\n"[..]).is_err());
        assert!(read_thresholds(&b"t,lambda,survival_frac,retained_mean\n1,1,1,0\n"[..]).is_err());
        assert!(read_thresholds(&b""[..]).is_err());
        let ok = read_thresholds(&b"t,lambda,survival_frac,retained_mean\n0,1,1,0\n1,0.5,0.9,0.04\n"[..]).unwrap();
        assert_eq!(ok.values(), &[1.0, 0.5]);
        assert!(ok.meta().is_none());
    }
}
