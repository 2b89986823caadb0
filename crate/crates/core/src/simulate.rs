// SPDX-License-Identifier: MIT OR Apache-2.0

//! Replication engine and per-time metrics.
//!
//! Metrics are indexed by `s = t + 1`, the time of the active set they
//! describe: row `s` reports `FNP_s` and `LFNR_s` (functions of `S_s` and of
//! `W_{., s-1}`), `FDP_s` and `LFDR_s` over `S_{s-1} \ S_s`, `|S_s|`,
//! `U_s`, `RL_s` and `CD_s`.

use crate::detector::{DecisionTrace, Detector, DetectorConfig, Mode};
use crate::model::{ChangePoint, EnsembleModel};
use crate::numeric::compensated_mean;
use crate::rng::{substream, StreamRng, SHARED_STREAM};
use crate::{Error, Execution, Result};

/// `#{k in S_{t+1} : tau_k < t} / max(|S_{t+1}|, 1)`.
pub fn fnp(active_next: &[usize], tau: &[ChangePoint], t: u64) -> f64 {
    let changed = active_next.iter().filter(|&&k| tau[k].before(t)).count();
    changed as f64 / active_next.len().max(1) as f64
}

/// Mean of `W_{k,t}` over `S_{t+1}`; 0 for an empty set.
pub fn lfnr_realized(w_prev: &[f64], active_next: &[usize]) -> f64 {
    compensated_mean(active_next.iter().map(|&k| w_prev[k]))
}

/// `(FDP, LFDR)` over the streams dropped at time `t`, given as
/// `(stream, W_{k,t})` pairs.
pub fn fdp_lfdr(dropped: &[(usize, f64)], tau: &[ChangePoint], t: u64) -> (f64, f64) {
    let d = dropped.len().max(1) as f64;
    let false_discoveries = dropped.iter().filter(|&&(k, _)| !tau[k].before(t)).count();
    let lfdr = compensated_mean(dropped.iter().map(|&(_, w)| 1.0 - w)) * dropped.len() as f64 / d;
    (false_discoveries as f64 / d, lfdr)
}

/// `(RL_t, CD_t, U_t)` from a trace that covers time `t >= 1`; streams
/// without a recorded stop are treated as active through `t`.
pub fn run_length_and_cd(trace: &DecisionTrace, tau: &[ChangePoint], t: u64) -> (u64, usize, u64) {
    let k = tau.len();
    let rl = trace
        .stops()
        .iter()
        .zip(tau)
        .map(|(stop, tau)| tau.min_with(stop.unwrap_or(t).min(t)))
        .sum();
    let sizes = &trace.active_sizes()[..t as usize];
    let u = sizes.iter().map(|&n| n as u64).sum();
    (rl, k - sizes[t as usize - 1], u)
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub model: EnsembleModel,
    pub k: usize,
    pub alpha: f64,
    pub horizon: u64,
    pub replications: usize,
    pub procedure: Mode,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::param("reps", "need at least one replication"));
        }
        if self.horizon == 0 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        self.model.check_streams(self.k)?;
        if let Mode::Threshold(table) = &self.procedure {
            if table.values().len() < self.horizon as usize {
                return Err(Error::TableExhausted(table.values().len() as u64));
            }
        }
        // Surfaces mode/model incompatibilities before any work is done.
        self.detector()?;
        Ok(())
    }

    fn detector(&self) -> Result<Detector> {
        let config = DetectorConfig::new(self.alpha, self.procedure.clone())?;
        Detector::new(self.model.clone(), self.k, config, Execution::Sequential)
    }
}

/// Change points and decisions of one replication.
#[derive(Clone, Debug)]
pub struct Replication {
    pub tau: Vec<ChangePoint>,
    /// Shared change point, for models that have one.
    pub tau0: Option<ChangePoint>,
    pub trace: DecisionTrace,
    series: Vec<[f64; METRICS]>,
}

const METRICS: usize = 8;
const FNP: usize = 0;
const LFNR: usize = 1;
const ACTIVE: usize = 2;
const UTIL: usize = 3;
const FDP: usize = 4;
const LFDR: usize = 5;
const RL: usize = 6;
const CD: usize = 7;

/// Runs replication `rep` of `config`. Stream `k` draws its change point
/// and then its observations from substream `(seed, rep, k)`.
pub fn run_replication(config: &SimConfig, rep: u64) -> Result<Replication> {
    let model = &config.model;
    let k = config.k;
    let tau0 = model.sample_shared(&mut substream(config.seed, rep, SHARED_STREAM));
    let mut rngs: Vec<StreamRng> = (0..k).map(|s| substream(config.seed, rep, s as u64)).collect();
    let tau: Vec<ChangePoint> = rngs
        .iter_mut()
        .enumerate()
        .map(|(s, rng)| model.sample_stream(s, tau0, rng))
        .collect();

    let mut det = config.detector()?;
    let mut series = Vec::with_capacity(config.horizon as usize);
    let (mut util, mut rl) = (0u64, 0u64);
    for t in 0..config.horizon {
        let sel = det.select()?;
        let (fdp, lfdr) = fdp_lfdr(&sel.dropped, &tau, t);
        let active = sel.retained.len();
        util += active as u64;
        rl += sel.retained.iter().filter(|&&s| !tau[s].before(t + 1)).count() as u64;
        series.push([
            fnp(&sel.retained, &tau, t),
            sel.lfnr,
            active as f64,
            util as f64,
            fdp,
            lfdr,
            rl as f64,
            (k - active) as f64,
        ]);
        let xs: Vec<f64> = sel
            .retained
            .iter()
            .map(|&s| model.sample_observation(s, t + 1, tau[s], &mut rngs[s]))
            .collect();
        det.observe_aligned(&xs)?;
    }
    Ok(Replication {
        tau,
        tau0,
        trace: det.trace().clone(),
        series,
    })
}

/// Per-time means over replications, `t = 1..=horizon`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsFrame {
    pub replications: usize,
    pub k: usize,
    pub mean_fnp: Vec<f64>,
    pub mean_lfnr: Vec<f64>,
    pub mean_active: Vec<f64>,
    pub mean_utilization: Vec<f64>,
    pub mean_fdp: Vec<f64>,
    pub mean_lfdr: Vec<f64>,
    pub mean_rl: Vec<f64>,
    pub mean_cd: Vec<f64>,
    /// Standard errors; `None` with a single replication.
    pub se_fnp: Option<Vec<f64>>,
    pub se_lfnr: Option<Vec<f64>>,
    pub se_active: Option<Vec<f64>>,
}

impl MetricsFrame {
    pub fn horizon(&self) -> usize {
        self.mean_fnp.len()
    }
}

struct Accumulator {
    sum: Vec<[f64; METRICS]>,
    sum_sq: Vec<[f64; METRICS]>,
}

impl Accumulator {
    fn new(horizon: usize) -> Self {
        Self {
            sum: vec![[0.0; METRICS]; horizon],
            sum_sq: vec![[0.0; METRICS]; horizon],
        }
    }

    fn add(&mut self, series: &[[f64; METRICS]]) {
        for ((s, q), row) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(series) {
            for m in 0..METRICS {
                s[m] += row[m];
                q[m] += row[m] * row[m];
            }
        }
    }

    fn finish(self, reps: usize, k: usize) -> MetricsFrame {
        let n = reps as f64;
        let mean = |m: usize| -> Vec<f64> { self.sum.iter().map(|s| s[m] / n).collect() };
        let se = |m: usize| -> Option<Vec<f64>> {
            (reps > 1).then(|| {
                self.sum
                    .iter()
                    .zip(&self.sum_sq)
                    .map(|(s, q)| {
                        let mu = s[m] / n;
                        let var = ((q[m] - n * mu * mu) / (n - 1.0)).max(0.0);
                        (var / n).sqrt()
                    })
                    .collect()
            })
        };
        MetricsFrame {
            replications: reps,
            k,
            mean_fnp: mean(FNP),
            mean_lfnr: mean(LFNR),
            mean_active: mean(ACTIVE),
            mean_utilization: mean(UTIL),
            mean_fdp: mean(FDP),
            mean_lfdr: mean(LFDR),
            mean_rl: mean(RL),
            mean_cd: mean(CD),
            se_fnp: se(FNP),
            se_lfnr: se(LFNR),
            se_active: se(ACTIVE),
        }
    }
}

const CHUNK: usize = 64;

/// Runs all replications and averages their metrics. Replications run in
/// parallel chunks; sums are accumulated in replication order, so the
/// result is bit-identical for every execution mode and thread count.
pub fn run_experiment(config: &SimConfig, exec: Execution) -> Result<MetricsFrame> {
    config.validate()?;
    let mut acc = Accumulator::new(config.horizon as usize);
    let mut start = 0;
    while start < config.replications {
        let end = (start + CHUNK).min(config.replications);
        let chunk = exec.map_range(end - start, |i| run_replication(config, (start + i) as u64));
        for rep in chunk {
            acc.add(&rep?.series);
        }
        start = end;
    }
    Ok(acc.finish(config.replications, config.k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::ThresholdTable;
    use crate::model::ObservationModel;
    use ChangePoint::{At, Never};

    #[test]
    fn fnp_examples() {
        assert_eq!(fnp(&[0, 1], &[At(0), Never], 5), 0.5);
        assert_eq!(fnp(&[], &[At(0)], 5), 0.0);
        assert_eq!(fnp(&[0, 1, 2], &[At(4), At(4), At(4)], 4), 0.0);
    }

    #[test]
    fn lfnr_examples() {
        assert_eq!(lfnr_realized(&[0.0, 0.0], &[0, 1]), 0.0);
        assert!((lfnr_realized(&[0.02, 0.04, 0.9], &[0, 1]) - 0.03).abs() < 1e-15);
        assert_eq!(lfnr_realized(&[0.5], &[]), 0.0);
    }

    #[test]
    fn fdp_examples() {
        assert_eq!(fdp_lfdr(&[], &[], 3), (0.0, 0.0));
        assert_eq!(fdp_lfdr(&[(0, 0.7)], &[Never], 3).0, 1.0);
        let (_, lfdr) = fdp_lfdr(&[(0, 0.9), (1, 0.8)], &[At(0), At(0)], 3);
        assert!((lfdr - 0.15).abs() < 1e-15);
    }

    fn gauss_config(k: usize, theta: f64, reps: usize, horizon: u64, procedure: Mode) -> SimConfig {
        SimConfig {
            model: EnsembleModel::iid(theta, ObservationModel::gaussian(1.0, 1.0).unwrap()).unwrap(),
            k,
            alpha: 0.05,
            horizon,
            replications: reps,
            procedure,
            seed: 17,
        }
    }

    #[test]
    fn run_length_examples() {
        let trace = DecisionTrace::from_stops(vec![Some(3)], 10);
        assert_eq!(run_length_and_cd(&trace, &[At(5)], 10), (3, 1, 3));
        let trace = DecisionTrace::from_stops(vec![Some(7)], 10);
        assert_eq!(run_length_and_cd(&trace, &[At(2)], 10).0, 2);
        let trace = DecisionTrace::from_stops(vec![None; 4], 10);
        assert_eq!(run_length_and_cd(&trace, &[Never; 4], 1), (4, 0, 4));
    }

    #[test]
    fn per_replication_identities() {
        let cfg = gauss_config(40, 0.05, 1, 60, Mode::Adaptive);
        let rep = run_replication(&cfg, 3).unwrap();
        for t in 1..=60u64 {
            let row = rep.series[t as usize - 1];
            let (rl, cd, u) = run_length_and_cd(&rep.trace, &rep.tau, t);
            assert_eq!(row[RL], rl as f64, "t={t}");
            assert_eq!(row[CD], cd as f64);
            assert_eq!(row[UTIL], u as f64);
            assert!(row[LFNR] <= 0.05 + 1e-12);
        }
    }

    #[test]
    fn frame_invariants_and_determinism() {
        let cfg = gauss_config(50, 0.05, 40, 80, Mode::Adaptive);
        let a = run_experiment(&cfg, Execution::Parallel).unwrap();
        let b = run_experiment(&cfg, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        for t in 0..a.horizon() {
            assert!((a.mean_cd[t] - (50.0 - a.mean_active[t])).abs() < 1e-9);
            if t > 0 {
                assert!(a.mean_active[t] <= a.mean_active[t - 1]);
                let inc = a.mean_utilization[t] - a.mean_utilization[t - 1];
                assert!((inc - a.mean_active[t]).abs() < 1e-9);
            }
            assert!(a.mean_lfnr[t] <= 0.05);
        }
        assert_eq!(a.mean_fnp[0], 0.0);
        assert_eq!(a.mean_lfnr[0], 0.0);
        assert_eq!(a.mean_active[0], 50.0);
    }

    #[test]
    fn single_replication_has_no_se() {
        let frame = run_experiment(&gauss_config(10, 0.05, 1, 5, Mode::Adaptive), Execution::Sequential).unwrap();
        assert!(frame.se_fnp.is_none() && frame.se_lfnr.is_none());
    }

    #[test]
    fn standard_errors_scale() {
        let small = run_experiment(&gauss_config(50, 0.05, 200, 12, Mode::Adaptive), Execution::Parallel).unwrap();
        let mut big_cfg = gauss_config(50, 0.05, 800, 12, Mode::Adaptive);
        big_cfg.seed = 99;
        let big = run_experiment(&big_cfg, Execution::Parallel).unwrap();
        // Four times the replications, half the standard error.
        let (s, b) = (small.se_lfnr.unwrap(), big.se_lfnr.unwrap());
        let ratios: Vec<f64> = (2..12).map(|t| s[t] / b[t]).collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((1.6..2.4).contains(&mean), "{ratios:?}");
    }

    #[test]
    fn config_errors() {
        let mut cfg = gauss_config(10, 0.05, 0, 5, Mode::Adaptive);
        assert!(run_experiment(&cfg, Execution::Sequential).is_err());
        cfg.replications = 2;
        cfg.procedure = Mode::Dependent;
        assert!(matches!(run_experiment(&cfg, Execution::Sequential), Err(Error::Unsupported(_))));
        cfg.procedure = Mode::Threshold(ThresholdTable::new(vec![1.0, 0.5]).unwrap());
        assert!(matches!(run_experiment(&cfg, Execution::Sequential), Err(Error::TableExhausted(_))));
        let tab = SimConfig {
            model: EnsembleModel::example3(),
            k: 4,
            procedure: Mode::Dependent,
            ..cfg
        };
        assert!(matches!(run_experiment(&tab, Execution::Sequential), Err(Error::Unsupported(_))));
    }
}
