// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use lfnr_core::calibrate::{calibrate_thresholds, Calibration, CalibrationParams};
use lfnr_core::detector::{Detector, DetectorConfig, Mode, StopTime, ThresholdTable};
use lfnr_core::model::{EnsembleModel, FinitePrior, ObservationModel};
use lfnr_core::simulate::{run_experiment, SimConfig};
use lfnr_core::verify::suites::run_suite;
use lfnr_core::{io, Execution};

use crate::args::{
    default_horizon, CalibrateArgs, Command, DetectArgs, ModelArgs, ModelKind, ObsKind, Procedure, SimulateArgs,
    VerifyArgs,
};
use crate::input::{self, data_err, StepReader};

/// Smallest stream count accepted for calibration.
pub const MIN_CALIBRATION_STREAMS: usize = 1000;

/// Bad combination of command-line options.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug)]
pub struct VerifyFailed(pub usize);

impl std::fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} check(s) failed", self.0)
    }
}

impl std::error::Error for VerifyFailed {}

pub fn dispatch(cli: crate::args::Cli) -> Result<()> {
    match cli.command {
        Command::Detect(a) => detect(a),
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Verify(a) => verify(a),
    }
}

fn obs_model(m: &ModelArgs) -> Result<ObservationModel> {
    Ok(match m.obs {
        ObsKind::Gaussian => ObservationModel::gaussian(m.mu, m.sigma)?,
        ObsKind::Bernoulli => ObservationModel::bernoulli(m.p0, m.p1)?,
    })
}

fn parse_priors(spec: &str) -> Result<Vec<FinitePrior>> {
    spec.split(';')
        .map(|row| {
            let masses = row
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| Usage(format!("bad prior mass `{v}`"))))
                .collect::<std::result::Result<Vec<f64>, Usage>>()?;
            Ok(FinitePrior::new(masses)?)
        })
        .collect()
}

fn build_model(m: &ModelArgs) -> Result<EnsembleModel> {
    if m.prior.is_some() && m.model != ModelKind::Tabular {
        bail!(Usage("--prior only applies to --model tabular".into()));
    }
    Ok(match m.model {
        ModelKind::Ms => EnsembleModel::iid(m.theta, obs_model(m)?)?,
        ModelKind::Partial => EnsembleModel::partial_dep(m.theta, m.eta, obs_model(m)?)?,
        ModelKind::Tabular => {
            let spec = m.prior.as_deref().ok_or_else(|| Usage("--model tabular needs --prior".into()))?;
            let priors = parse_priors(spec)?;
            let obs = vec![obs_model(m)?; priors.len()];
            EnsembleModel::tabular(priors, obs)?
        }
        ModelKind::Example3 => EnsembleModel::example3(),
    })
}

fn model_meta(m: &ModelArgs, model: &EnsembleModel) -> Vec<(String, String)> {
    let mut meta = vec![
        ("model".to_string(), format!("{:?}", m.model).to_lowercase()),
        ("theta".into(), m.theta.to_string()),
        ("eta".into(), m.eta.to_string()),
        ("obs".into(), format!("{:?}", m.obs).to_lowercase()),
        ("mu".into(), m.mu.to_string()),
        ("sigma".into(), m.sigma.to_string()),
        ("p0".into(), m.p0.to_string()),
        ("p1".into(), m.p1.to_string()),
    ];
    if let Some(p) = &m.prior {
        meta.push(("prior".into(), p.clone()));
    }
    meta.push(("fingerprint".into(), model.fingerprint()));
    meta
}

fn load_table(path: &Path) -> Result<ThresholdTable> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    io::read_thresholds(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// Output file or standard output.
fn create(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// Writes `contents` next to `path` and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", path.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct StepReport<'a> {
    /// Time of the data that was just absorbed.
    t: u64,
    /// Streams that received this observation, `S_t`.
    active: &'a [usize],
    /// Streams deactivated at `t - 1`, with their final posterior.
    dropped: &'a [(usize, f64)],
    /// Mean posterior of `S_t` at `t - 1`.
    lfnr: f64,
    /// `W_{k,t}` for the streams in `active`.
    w: Vec<f64>,
    /// Rows ignored because their stream was already deactivated.
    discarded: usize,
}

fn detect(args: DetectArgs) -> Result<()> {
    let model = build_model(&args.model)?;
    let mode = match args.mode {
        Procedure::Adaptive => Mode::Adaptive,
        Procedure::Dependent => Mode::Dependent,
        Procedure::Threshold => {
            let path = args.table.as_deref().ok_or_else(|| Usage("--mode threshold needs --table".into()))?;
            Mode::Threshold(load_table(path)?)
        }
    };
    if args.table.is_some() && args.mode != Procedure::Threshold {
        bail!(Usage("--table only applies to --mode threshold".into()));
    }
    let config = DetectorConfig::new(args.alpha, mode)?;
    let exec = Execution::Parallel;

    let mut steps = StepReader::new(input::open(&args.input)?, args.format)?;
    let resumed = match &args.checkpoint {
        Some(p) if p.exists() => {
            let blob = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(Detector::restore(&blob, model.clone(), config.clone(), exec).with_context(|| format!("restoring {}", p.display()))?)
        }
        _ => None,
    };
    let mut pending = steps.next_step()?;
    let Some(first) = &pending else {
        if resumed.is_none() {
            bail!(input::DataError("no observations".into()));
        }
        return finish_detect(&args, &resumed.expect("checked above"));
    };
    let mut det = match resumed {
        Some(d) => {
            if let Some(k) = args.k {
                if k != d.k() {
                    bail!(Usage(format!("--k {k} does not match the checkpoint ({} streams)", d.k())));
                }
            }
            d
        }
        None => {
            let k = match (args.k, model.fixed_streams()) {
                (Some(k), _) => k,
                (None, Some(n)) => n,
                (None, None) => {
                    if first.t != 1 {
                        return Err(data_err!("line {}: input starts at t={}, expected t=1", first.rows[0].line, first.t));
                    }
                    first.rows.iter().map(|r| r.stream).max().map_or(0, |m| m + 1)
                }
            };
            Detector::new(model, k, config, exec)?
        }
    };

    let mut report = create(args.report.as_deref())?;
    let mut skipped = 0usize;
    while let Some(step) = pending.take() {
        if step.t <= det.t() {
            skipped += step.rows.len();
        } else {
            let line = step.rows[0].line;
            if step.t != det.t() + 1 {
                return Err(data_err!("line {line}: time gap, expected t={} but found t={}", det.t() + 1, step.t));
            }
            let (obs, mut discarded) = input::observations(&step, det.k(), |s| det.active().contains(s))?;
            let selection = det.step(&obs).map_err(|e| data_err!("line {line} (t={}): {e}", step.t))?;
            discarded += selection.dropped.iter().filter(|(s, _)| obs.iter().any(|(o, _)| o == s)).count();
            let rec = StepReport {
                t: step.t,
                active: &selection.retained,
                dropped: &selection.dropped,
                lfnr: selection.lfnr,
                w: selection.retained.iter().map(|&s| det.w(s)).collect(),
                discarded,
            };
            serde_json::to_writer(&mut report, &rec)?;
            writeln!(report)?;
        }
        pending = steps.next_step()?;
    }
    report.flush()?;
    if skipped > 0 {
        eprintln!("skipped {skipped} rows already covered by the checkpoint");
    }
    finish_detect(&args, &det)
}

fn finish_detect(args: &DetectArgs, det: &Detector) -> Result<()> {
    if let Some(path) = &args.stops {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(["stream", "stop", "status"])?;
        for k in 0..det.k() {
            let (stop, status) = match det.trace().stop_time(k, det.t()) {
                StopTime::Deactivated(t) => (t, "deactivated"),
                StopTime::Censored(t) => (t, "censored"),
            };
            w.write_record([k.to_string(), stop.to_string(), status.to_string()])?;
        }
        w.flush()?;
    }
    if let Some(path) = &args.checkpoint {
        write_atomic(path, &det.checkpoint()?)?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let model = build_model(&args.model)?;
    let horizon = args.horizon.unwrap_or_else(|| default_horizon(args.model.theta));
    let exec = Execution::Parallel;
    let mut meta = vec![("command".to_string(), "simulate".to_string())];
    meta.extend(model_meta(&args.model, &model));
    meta.extend([
        ("k".into(), args.k.to_string()),
        ("alpha".into(), args.alpha.to_string()),
        ("horizon".into(), horizon.to_string()),
        ("reps".into(), args.reps.to_string()),
        ("procedure".into(), format!("{:?}", args.procedure).to_lowercase()),
        ("seed".into(), args.seed.to_string()),
    ]);
    if args.table.is_some() && args.procedure != Procedure::Threshold {
        bail!(Usage("--table only applies to --procedure threshold".into()));
    }
    let procedure = match args.procedure {
        Procedure::Adaptive => Mode::Adaptive,
        Procedure::Dependent => Mode::Dependent,
        Procedure::Threshold => {
            let table = match &args.table {
                Some(path) => {
                    meta.push(("table".into(), path.display().to_string()));
                    load_table(path)?
                }
                None => {
                    let calibration_seed = args.seed.wrapping_add(1);
                    meta.push(("calibration_n".into(), args.calibration_n.to_string()));
                    meta.push(("calibration_seed".into(), calibration_seed.to_string()));
                    let EnsembleModel::Iid { .. } = model else {
                        bail!(Usage("on-the-fly calibration needs --model ms; pass --table instead".into()));
                    };
                    run_calibration(&args.model, args.alpha, args.calibration_n, horizon, calibration_seed, exec)?.table
                }
            };
            table.check_compatible(&model, args.alpha)?;
            Mode::Threshold(table)
        }
    };
    let config = SimConfig {
        model,
        k: args.k,
        alpha: args.alpha,
        horizon,
        replications: args.reps,
        procedure,
        seed: args.seed,
    };
    let frame = run_experiment(&config, exec)?;
    meta.push(("version".into(), env!("CARGO_PKG_VERSION").into()));
    let mut out = create(args.out.as_deref())?;
    io::write_metrics(&mut out, &frame, &meta)?;
    out.flush()?;
    Ok(())
}

fn run_calibration(m: &ModelArgs, alpha: f64, n: usize, horizon: u64, seed: u64, exec: Execution) -> Result<Calibration> {
    if n < MIN_CALIBRATION_STREAMS {
        bail!(Usage(format!("calibration needs at least {MIN_CALIBRATION_STREAMS} streams, got {n}")));
    }
    Ok(calibrate_thresholds(
        &CalibrationParams {
            theta: m.theta,
            obs: obs_model(m)?,
            alpha,
            n_streams: n,
            horizon,
            seed,
        },
        exec,
    )?)
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    if args.model.model != ModelKind::Ms {
        bail!(Usage("calibrate supports --model ms only".into()));
    }
    let model = build_model(&args.model)?;
    let horizon = args.horizon.unwrap_or_else(|| default_horizon(args.model.theta));
    let cal = run_calibration(&args.model, args.alpha, args.n, horizon, args.seed, Execution::Parallel)?;
    let mut meta = vec![("command".to_string(), "calibrate".to_string())];
    // `theta` and the fingerprint are already part of the table header.
    meta.extend(model_meta(&args.model, &model).into_iter().filter(|(k, _)| !["theta", "model", "fingerprint"].contains(&k.as_str())));
    meta.push(("horizon".into(), horizon.to_string()));
    meta.push(("version".into(), env!("CARGO_PKG_VERSION").into()));
    let mut out = create(args.out.as_deref())?;
    io::write_thresholds(&mut out, &cal, &meta)?;
    out.flush()?;
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<()> {
    let checks = run_suite(&args.suite, args.seed)?;
    let mut failed = 0;
    for c in &checks {
        println!("{c}");
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        bail!(VerifyFailed(failed));
    }
    Ok(())
}
