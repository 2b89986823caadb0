// SPDX-License-Identifier: MIT OR Apache-2.0

//! Monte Carlo estimation of the limiting thresholds `lambda_t`.
//!
//! One large-`n` run of the adaptive detector on simulated i.i.d. streams.
//! At each `t` the largest retained posterior is the plug-in estimate of
//! `lambda_t`, `|S_{t+1}| / n` estimates the limiting survival fraction and
//! the retained mean estimates the limiting LFNR.

use crate::detector::{Detector, DetectorConfig, ThresholdMeta, ThresholdTable};
use crate::model::{ChangePoint, EnsembleModel, ObservationModel};
use crate::rng::{substream, StreamRng};
use crate::{Error, Execution, Result};

/// `log(1 - alpha) / log(1 - theta)`: below this time no deactivation is
/// needed in the large-`K` limit.
pub fn critical_time(theta: f64, alpha: f64) -> f64 {
    (-alpha).ln_1p() / (-theta).ln_1p()
}

/// Limiting LFNR at time `t`: `1 - (1 - theta)^t` before the critical time,
/// `alpha` from then on.
pub fn lfnr_limit(theta: f64, alpha: f64, t: u64) -> f64 {
    if (t as f64) < critical_time(theta, alpha) {
        -((t as f64) * (-theta).ln_1p()).exp_m1()
    } else {
        alpha
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    /// `lambda_t` for `t = 0..=horizon`, with `lambda_0 = 1`.
    pub table: ThresholdTable,
    /// `|S_{t+1}| / n` for `t = 0..=horizon`.
    pub survival: Vec<f64>,
    /// Mean `W_{k,t}` over `S_{t+1}` for `t = 0..=horizon`.
    pub retained_mean: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CalibrationParams {
    pub theta: f64,
    pub obs: ObservationModel,
    pub alpha: f64,
    pub n_streams: usize,
    pub horizon: u64,
    pub seed: u64,
}

struct SimStream {
    index: usize,
    tau: ChangePoint,
    rng: StreamRng,
}

/// Runs the adaptive detector on `n_streams` simulated streams up to the
/// horizon. The per-stream generators are those of replication 0 under
/// `seed`, so the result does not depend on the execution mode.
pub fn calibrate_thresholds(params: &CalibrationParams, exec: Execution) -> Result<Calibration> {
    let CalibrationParams {
        theta,
        obs,
        alpha,
        n_streams,
        horizon,
        seed,
    } = *params;
    if horizon == 0 {
        return Err(Error::param("horizon", "must be at least 1"));
    }
    if n_streams == 0 {
        return Err(Error::param("n", "need at least one stream"));
    }
    let model = EnsembleModel::iid(theta, obs)?;
    let config = DetectorConfig::adaptive(alpha)?;
    let mut det = Detector::new(model.clone(), n_streams, config, exec)?;

    let mut streams: Vec<SimStream> = exec.map_range(n_streams, |k| {
        let mut rng = substream(seed, 0, k as u64);
        let tau = model.sample_stream(k, None, &mut rng);
        SimStream { index: k, tau, rng }
    });

    let n = n_streams as f64;
    let mut lambda = Vec::with_capacity(horizon as usize + 1);
    let mut survival = Vec::with_capacity(horizon as usize + 1);
    let mut retained_mean = Vec::with_capacity(horizon as usize + 1);
    for t in 0..=horizon {
        let selection = det.select()?;
        let estimate = if selection.dropped.is_empty() {
            1.0
        } else {
            selection.retained.iter().map(|&k| det.w(k)).fold(0.0, f64::max)
        };
        lambda.push(estimate);
        survival.push(selection.retained.len() as f64 / n);
        retained_mean.push(selection.lfnr);
        if t == horizon {
            break;
        }
        // Drop generators of deactivated streams; `retained` and `streams`
        // are both sorted by index.
        if !selection.dropped.is_empty() {
            let mut keep = selection.retained.iter().peekable();
            streams.retain(|s| {
                if keep.peek() == Some(&&s.index) {
                    keep.next();
                    true
                } else {
                    false
                }
            });
        }
        let xs = exec.map_mut(&mut streams, |s| model.sample_observation(s.index, t + 1, s.tau, &mut s.rng));
        det.observe_aligned(&xs)?;
    }

    let table = ThresholdTable::new(lambda)?.with_meta(ThresholdMeta {
        theta,
        alpha,
        fingerprint: model.fingerprint(),
        n_streams,
        seed,
    });
    Ok(Calibration {
        table,
        survival,
        retained_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert!((critical_time(0.05, 0.05) - 1.0).abs() < 1e-15);
        assert!((critical_time(0.01, 0.05) - 5.10364).abs() < 1e-5);
        assert_eq!(critical_time(0.01, 0.0), 0.0);
        assert!((lfnr_limit(0.01, 0.05, 3) - 0.029701).abs() < 1e-12);
        assert_eq!(lfnr_limit(0.01, 0.05, 6), 0.05);
        assert_eq!(lfnr_limit(0.05, 0.05, 1), 0.05);
    }

    fn params(theta: f64, n: usize, horizon: u64, seed: u64) -> CalibrationParams {
        CalibrationParams {
            theta,
            obs: ObservationModel::gaussian(1.0, 1.0).unwrap(),
            alpha: 0.05,
            n_streams: n,
            horizon,
            seed,
        }
    }

    #[test]
    fn no_deactivation_before_critical_time() {
        let cal = calibrate_thresholds(&params(0.01, 20_000, 12, 4), Execution::Parallel).unwrap();
        for t in 0..=5 {
            assert_eq!(cal.table.values()[t], 1.0, "t={t}");
            assert_eq!(cal.survival[t], 1.0);
        }
        for (t, &m) in cal.retained_mean.iter().enumerate() {
            assert!(m <= 0.05 + 1e-12, "t={t} mean={m}");
        }
        assert!((cal.retained_mean[3] - 0.029701).abs() < 0.003);
        assert!(cal.table.values()[8] < 1.0);
    }

    #[test]
    fn theta_equal_alpha_holds_the_level() {
        let cal = calibrate_thresholds(&params(0.05, 20_000, 10, 4), Execution::Parallel).unwrap();
        // E W_1 = theta = alpha, so whether anything is dropped at t = 1 is
        // down to sampling noise; from t = 2 on deactivation is certain.
        assert!(cal.table.values()[2] < 1.0);
        for t in 1..=10 {
            assert!((cal.retained_mean[t] - 0.05).abs() < 0.005, "t={t}");
        }
    }

    #[test]
    fn execution_mode_does_not_matter() {
        let a = calibrate_thresholds(&params(0.05, 3000, 15, 8), Execution::Parallel).unwrap();
        let b = calibrate_thresholds(&params(0.05, 3000, 15, 8), Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(calibrate_thresholds(&params(0.05, 100, 0, 1), Execution::Sequential).is_err());
        let mut p = params(0.05, 100, 5, 1);
        p.alpha = 1.5;
        assert!(calibrate_thresholds(&p, Execution::Sequential).is_err());
    }
}
