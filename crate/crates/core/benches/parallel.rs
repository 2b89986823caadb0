// SPDX-License-Identifier: MIT OR Apache-2.0

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lfnr_core::calibrate::{calibrate_thresholds, CalibrationParams};
use lfnr_core::detector::{Detector, DetectorConfig};
use lfnr_core::model::{EnsembleModel, ObservationModel};
use lfnr_core::simulate::{run_experiment, SimConfig};
use lfnr_core::{detector::Mode, Execution};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn gaussian() -> ObservationModel {
    ObservationModel::gaussian(1.0, 1.0).unwrap()
}

fn detector_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("detector_step");
    let k = 100_000;
    let model = EnsembleModel::iid(0.01, gaussian()).unwrap();
    let xs: Vec<f64> = (0..k).map(|i| ((i * 7919) % 1000) as f64 / 1000.0 - 0.5).collect();
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, k), |b| {
            b.iter(|| {
                let mut det = Detector::new(model.clone(), k, DetectorConfig::adaptive(0.05).unwrap(), exec).unwrap();
                for _ in 0..5 {
                    det.select().unwrap();
                    let n = det.active().len();
                    det.observe_aligned(&xs[..n]).unwrap();
                }
                det
            })
        });
    }
    group.finish();
}

fn calibration(c: &mut Criterion) {
    let mut group = c.benchmark_group("calibrate");
    group.sample_size(10);
    let params = CalibrationParams {
        theta: 0.05,
        obs: gaussian(),
        alpha: 0.05,
        n_streams: 50_000,
        horizon: 20,
        seed: 1,
    };
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| calibrate_thresholds(&params, exec).unwrap()));
    }
    group.finish();
}

fn replications(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    let config = SimConfig {
        model: EnsembleModel::iid(0.05, gaussian()).unwrap(),
        k: 500,
        alpha: 0.05,
        horizon: 100,
        replications: 64,
        procedure: Mode::Adaptive,
        seed: 1,
    };
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| run_experiment(&config, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, detector_steps, calibration, replications);
criterion_main!(benches);
