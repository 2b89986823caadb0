// SPDX-License-Identifier: MIT OR Apache-2.0

//! Checkpoint text format.
//!
//! ```text
//! lfnr-checkpoint v1 sha256=<hex digest of the body>
//! {"format_version":1,"t":...,"alpha":"0x1.999999999999ap-5",...}
//! ```
//!
//! Every real number is stored as a hexadecimal float string so the
//! round trip is bit-exact, including the infinite log-odds of `W = 0, 1`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ActiveSet, DecisionTrace, Detector, DetectorConfig, Engine, Hazard};
use crate::model::EnsembleModel;
use crate::posterior::{log_odds, DependentPosteriorState, PartialDepPosterior, PosteriorState};
use crate::{hexfloat, Error, Execution, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "lfnr-checkpoint v";

#[derive(Serialize, Deserialize)]
struct Body {
    format_version: u32,
    t: u64,
    alpha: String,
    mode: String,
    fingerprint: String,
    streams: Vec<StreamRecord>,
    active_sizes: Vec<usize>,
    lfnr: Vec<String>,
    engine: EngineRecord,
}

#[derive(Serialize, Deserialize)]
struct StreamRecord {
    index: usize,
    log_odds: String,
    frozen: bool,
    stop: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum EngineRecord {
    Independent,
    Partial {
        cumulative: Vec<Vec<String>>,
        frozen_log_evidence: Vec<String>,
        w: Vec<String>,
    },
    Dependent {
        t: u64,
        log_rho: String,
    },
}

fn hex_all(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|&x| hexfloat::format(x)).collect()
}

fn parse_all(xs: &[String]) -> Result<Vec<f64>> {
    xs.iter().map(|s| hexfloat::parse(s)).collect()
}

fn digest(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

pub(super) fn write(det: &Detector) -> Result<String> {
    if det.awaiting_data {
        return Err(Error::Phase("checkpoints are taken between steps"));
    }
    let k = det.k();
    let (streams, engine) = match &det.engine {
        Engine::Independent { state, .. } => {
            let streams = (0..k)
                .map(|i| StreamRecord {
                    index: i,
                    log_odds: hexfloat::format(state.log_odds(i)),
                    frozen: state.is_frozen(i),
                    stop: det.trace.stops[i],
                })
                .collect();
            (streams, EngineRecord::Independent)
        }
        Engine::Partial(p) => {
            let (cumulative, frozen, evidence, w) = p.parts();
            let streams = (0..k)
                .map(|i| StreamRecord {
                    index: i,
                    log_odds: hexfloat::format(log_odds(w[i])),
                    frozen: frozen[i],
                    stop: det.trace.stops[i],
                })
                .collect();
            let record = EngineRecord::Partial {
                cumulative: cumulative.iter().map(|c| hex_all(c)).collect(),
                frozen_log_evidence: hex_all(evidence),
                w: hex_all(w),
            };
            (streams, record)
        }
        Engine::Dependent { state, .. } => {
            let streams = (0..k)
                .map(|i| StreamRecord {
                    index: i,
                    log_odds: hexfloat::format(state.log_rho()),
                    frozen: det.trace.stops[i].is_some(),
                    stop: det.trace.stops[i],
                })
                .collect();
            let record = EngineRecord::Dependent {
                t: state.t(),
                log_rho: hexfloat::format(state.log_rho()),
            };
            (streams, record)
        }
    };
    let body = Body {
        format_version: FORMAT_VERSION,
        t: det.t,
        alpha: hexfloat::format(det.config.alpha),
        mode: det.config.mode.name().to_string(),
        fingerprint: det.model.fingerprint(),
        streams,
        active_sizes: det.trace.active_sizes.clone(),
        lfnr: hex_all(&det.trace.lfnr),
        engine,
    };
    let json = serde_json::to_string(&body).map_err(|e| Error::Format(e.to_string()))?;
    Ok(format!("{MAGIC}{FORMAT_VERSION} sha256={}\n{json}\n", digest(&json)))
}

fn mismatch(what: &str, found: impl std::fmt::Display, expected: impl std::fmt::Display) -> Error {
    Error::CheckpointMismatch(format!("{what}: checkpoint has {found}, detector has {expected}"))
}

pub(super) fn read(blob: &str, model: EnsembleModel, config: DetectorConfig, exec: Execution) -> Result<Detector> {
    let (header, rest) = blob
        .split_once('\n')
        .ok_or_else(|| Error::CheckpointCorrupt("missing header line".into()))?;
    let header = header
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::CheckpointCorrupt("not a checkpoint".into()))?;
    let (version, sum) = header
        .split_once(' ')
        .ok_or_else(|| Error::CheckpointCorrupt("malformed header".into()))?;
    let version: u32 = version
        .parse()
        .map_err(|_| Error::CheckpointCorrupt(format!("bad version `{version}`")))?;
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let sum = sum
        .strip_prefix("sha256=")
        .ok_or_else(|| Error::CheckpointCorrupt("missing checksum".into()))?;
    let json = rest.strip_suffix('\n').unwrap_or(rest);
    if digest(json) != sum {
        return Err(Error::CheckpointCorrupt("checksum mismatch".into()));
    }
    let body: Body = serde_json::from_str(json).map_err(|e| Error::CheckpointCorrupt(e.to_string()))?;
    if body.format_version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: body.format_version,
            expected: FORMAT_VERSION,
        });
    }

    let fingerprint = model.fingerprint();
    if body.fingerprint != fingerprint {
        return Err(mismatch("model", &body.fingerprint, &fingerprint));
    }
    if body.mode != config.mode.name() {
        return Err(mismatch("mode", &body.mode, config.mode.name()));
    }
    let alpha = hexfloat::parse(&body.alpha)?;
    if alpha != config.alpha {
        return Err(mismatch("alpha", alpha, config.alpha));
    }

    let k = body.streams.len();
    let mut fresh = Detector::new(model, k, config, exec)?;
    if body.streams.iter().enumerate().any(|(i, s)| s.index != i) {
        return Err(Error::CheckpointCorrupt("stream records out of order".into()));
    }
    let stops: Vec<Option<u64>> = body.streams.iter().map(|s| s.stop).collect();
    fresh.engine = match (body.engine, &fresh.engine) {
        (EngineRecord::Independent, Engine::Independent { hazard, .. }) => {
            let lo = body
                .streams
                .iter()
                .map(|s| hexfloat::parse(&s.log_odds))
                .collect::<Result<Vec<_>>>()?;
            let frozen = body.streams.iter().map(|s| s.frozen).collect();
            let hazard: Hazard = hazard.clone();
            Engine::Independent {
                state: PosteriorState::from_parts(body.t, lo, frozen)?,
                hazard,
            }
        }
        (
            EngineRecord::Partial {
                cumulative,
                frozen_log_evidence,
                w,
            },
            Engine::Partial(_),
        ) => {
            let EnsembleModel::PartialDep { dep, .. } = &fresh.model else {
                unreachable!("partial engine implies the partial model")
            };
            let cumulative = cumulative.iter().map(|c| parse_all(c)).collect::<Result<Vec<_>>>()?;
            let frozen = body.streams.iter().map(|s| s.frozen).collect();
            Engine::Partial(PartialDepPosterior::from_parts(
                *dep,
                body.t,
                cumulative,
                frozen,
                parse_all(&frozen_log_evidence)?,
                parse_all(&w)?,
            )?)
        }
        (EngineRecord::Dependent { t, log_rho }, Engine::Dependent { theta, .. }) => Engine::Dependent {
            state: DependentPosteriorState::from_parts(t, hexfloat::parse(&log_rho)?),
            theta: *theta,
        },
        _ => return Err(Error::CheckpointCorrupt("engine record does not match the model".into())),
    };
    fresh.active = ActiveSet::from_flags(stops.iter().map(Option::is_none).collect());
    fresh.trace = DecisionTrace {
        stops,
        active_sizes: body.active_sizes,
        lfnr: parse_all(&body.lfnr)?,
    };
    fresh.t = body.t;
    Ok(fresh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::Mode;
    use crate::model::ObservationModel;
    use crate::rng::substream;

    fn run_some(model: &EnsembleModel, det: &mut Detector, steps: u64, seed: u64) {
        let k = det.k();
        let mut rng = substream(seed, 0, 0);
        let taus = model.sample_change_points(k, &mut rng).unwrap();
        for _ in 0..steps {
            let t = det.t();
            det.select().unwrap();
            let xs: Vec<f64> = det
                .active()
                .members()
                .iter()
                .map(|&s| model.sample_observation(s, t + 1, taus[s], &mut rng))
                .collect();
            det.observe_aligned(&xs).unwrap();
        }
    }

    fn models() -> Vec<(EnsembleModel, usize, Mode)> {
        let g = ObservationModel::gaussian(1.0, 1.0).unwrap();
        vec![
            (EnsembleModel::iid(0.1, g).unwrap(), 20, Mode::Adaptive),
            (EnsembleModel::partial_dep(0.1, 0.6, g).unwrap(), 6, Mode::Adaptive),
            (EnsembleModel::partial_dep(0.1, 1.0, g).unwrap(), 5, Mode::Dependent),
            (EnsembleModel::example3(), 4, Mode::Adaptive),
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        for (model, k, mode) in models() {
            let config = DetectorConfig::new(0.3, mode).unwrap();
            let mut det = Detector::new(model.clone(), k, config.clone(), Execution::Sequential).unwrap();
            run_some(&model, &mut det, 3, 5);
            let blob = det.checkpoint().unwrap();
            let back = Detector::restore(&blob, model, config, Execution::Sequential).unwrap();
            assert_eq!(back, det);
        }
    }

    #[test]
    fn infinite_log_odds_survive() {
        let model = EnsembleModel::iid(0.2, ObservationModel::bernoulli(0.3, 0.6).unwrap()).unwrap();
        let config = DetectorConfig::adaptive(0.5).unwrap();
        let det = Detector::new(model.clone(), 3, config.clone(), Execution::Sequential).unwrap();
        let blob = det.checkpoint().unwrap();
        assert!(blob.contains("-inf"));
        assert_eq!(Detector::restore(&blob, model, config, Execution::Sequential).unwrap(), det);
    }

    #[test]
    fn corrupted_blobs() {
        let model = EnsembleModel::iid(0.1, ObservationModel::gaussian(1.0, 1.0).unwrap()).unwrap();
        let config = DetectorConfig::adaptive(0.05).unwrap();
        let mut det = Detector::new(model.clone(), 10, config.clone(), Execution::Sequential).unwrap();
        run_some(&model, &mut det, 4, 9);
        let blob = det.checkpoint().unwrap();

        let truncated = &blob[..blob.len() / 2];
        assert!(matches!(
            Detector::restore(truncated, model.clone(), config.clone(), Execution::Sequential),
            Err(Error::CheckpointCorrupt(_))
        ));

        let bumped = blob.replacen("lfnr-checkpoint v1", "lfnr-checkpoint v2", 1);
        assert!(matches!(
            Detector::restore(&bumped, model.clone(), config.clone(), Execution::Sequential),
            Err(Error::CheckpointVersion { found: 2, expected: 1 })
        ));

        let other = EnsembleModel::iid(0.2, ObservationModel::gaussian(1.0, 1.0).unwrap()).unwrap();
        assert!(matches!(
            Detector::restore(&blob, other, config, Execution::Sequential),
            Err(Error::CheckpointMismatch(_))
        ));

        let mid = det.clone();
        let mut mid = mid;
        mid.select().unwrap();
        assert!(matches!(mid.checkpoint(), Err(Error::Phase(_))));
    }

    #[test]
    fn resume_matches_uninterrupted() {
        for (model, k, mode) in models() {
            let config = DetectorConfig::new(0.3, mode).unwrap();
            let mut rng = substream(21, 0, 0);
            let taus = model.sample_change_points(k, &mut rng).unwrap();
            let data: Vec<Vec<f64>> = (1..=12u64)
                .map(|t| (0..k).map(|s| model.sample_observation(s, t, taus[s], &mut rng)).collect())
                .collect();
            let feed = |det: &mut Detector, row: &[f64]| {
                let obs: Vec<(usize, f64)> = det.active().members().iter().map(|&s| (s, row[s])).collect();
                det.step(&obs).unwrap();
            };

            let mut full = Detector::new(model.clone(), k, config.clone(), Execution::Sequential).unwrap();
            data.iter().for_each(|row| feed(&mut full, row));

            let mut first = Detector::new(model.clone(), k, config.clone(), Execution::Sequential).unwrap();
            data[..5].iter().for_each(|row| feed(&mut first, row));
            let blob = first.checkpoint().unwrap();
            let mut resumed = Detector::restore(&blob, model.clone(), config.clone(), Execution::Parallel).unwrap();
            data[5..].iter().for_each(|row| feed(&mut resumed, row));

            assert_eq!(resumed.trace(), full.trace());
        }
    }
}
