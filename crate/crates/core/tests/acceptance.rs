// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::time::{Duration, Instant};

use lfnr_core::calibrate::{calibrate_thresholds, CalibrationParams};
use lfnr_core::detector::{Detector, DetectorConfig, Mode};
use lfnr_core::io::write_metrics;
use lfnr_core::model::{ChangePoint, EnsembleModel, ObservationModel};
use lfnr_core::rng::substream;
use lfnr_core::simulate::{run_experiment, run_replication, SimConfig};
use lfnr_core::verify::suites::{adversarial_weights, optimality_instance, posterior_max_error, random_weights, subset_agreement};
use lfnr_core::verify::{example3_enumeration, h_o_monotone_check, uniform_opt_dp};
use lfnr_core::verify::dp::ratio;
use lfnr_core::verify::order::partial_order_axioms;
use lfnr_core::Execution;
use rand::Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn gaussian() -> ObservationModel {
    ObservationModel::gaussian(1.0, 1.0).unwrap()
}

fn sim(k: usize, theta: f64, reps: usize, horizon: u64, seed: u64) -> SimConfig {
    SimConfig {
        model: EnsembleModel::iid(theta, gaussian()).unwrap(),
        k,
        alpha: 0.05,
        horizon,
        replications: reps,
        procedure: Mode::Adaptive,
        seed,
    }
}

fn posterior_oracle() -> Outcome {
    let mut rng = substream(101, 0, 0);
    let worst = posterior_max_error(&mut rng, 1000);
    outcome(worst <= 1e-10, format!("max |update - brute force| = {worst:.2e} over 1000 sequences"))
}

fn local_optimality() -> Outcome {
    let mut rng = substream(102, 0, 0);
    let mut failure = None;
    for _ in 0..1000 {
        let alpha = [0.05, 0.1, 0.3][rng.random_range(0..3)];
        let w = random_weights(&mut rng, alpha, 12);
        if let Err(e) = subset_agreement(&w, alpha) {
            failure = Some(e);
            break;
        }
    }
    let adversarial = adversarial_weights();
    if failure.is_none() {
        failure = adversarial.iter().find_map(|(w, a)| subset_agreement(w, *a).err());
    }
    match failure {
        None => outcome(true, format!("1000 random + {} adversarial vectors agree with exhaustive search", adversarial.len())),
        Some(e) => outcome(false, e),
    }
}

fn example3() -> Outcome {
    let r = example3_enumeration();
    let ok = r.sup_u2 == ratio(7, 1) && r.sup_u4 == ratio(10, 1) && !r.coexist;
    outcome(ok, format!("U2={} U4={} coexist={}", r.sup_u2, r.sup_u4, r.coexist))
}

fn desk_reproduction() -> Outcome {
    let k = 500;
    let frame = run_experiment(&sim(k, 0.05, 500, 200, 1), Execution::Sequential).unwrap();
    let se_fnp = frame.se_fnp.as_ref().unwrap();
    let lfnr_bad = frame.mean_lfnr.iter().position(|&m| m > 0.05);
    let fnp_bad = (0..frame.horizon()).find(|&i| frame.mean_fnp[i] > 0.05 + 3.0 * se_fnp[i]);
    let last = *frame.mean_active.last().unwrap();
    let max_lfnr = frame.mean_lfnr.iter().cloned().fold(0.0, f64::max);
    let ok = lfnr_bad.is_none() && fnp_bad.is_none() && last < 0.05 * k as f64;
    outcome(
        ok,
        format!(
            "max mean LFNR {max_lfnr:.4}; FNP bound violated at {:?}; mean active at t=200 {last:.2}",
            fnp_bad.map(|i| i + 1)
        ),
    )
}

fn no_deactivation() -> Outcome {
    let k = 500;
    let config = sim(k, 0.01, 500, 6, 1);
    let reps = exec_map(500, |rep| run_replication(&config, rep as u64).unwrap().trace.active_sizes()[..5].to_vec());
    let violating: Vec<usize> = reps.iter().enumerate().filter(|(_, s)| s.iter().any(|&n| n != k)).map(|(i, _)| i).collect();
    outcome(
        violating.is_empty(),
        format!("{} of 500 replications deactivated a stream at some t <= 5", violating.len()),
    )
}

fn exec_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

fn asymptotics() -> Outcome {
    let params = |seed| CalibrationParams {
        theta: 0.01,
        obs: gaussian(),
        alpha: 0.05,
        n_streams: 200_000,
        horizon: 60,
        seed,
    };
    let a = calibrate_thresholds(&params(11), Execution::Parallel).unwrap();
    let b = calibrate_thresholds(&params(12), Execution::Parallel).unwrap();
    let m3 = a.retained_mean[3];
    let m10 = a.retained_mean[10];
    let gap = a.survival.iter().zip(&b.survival).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let ok = (m3 - 0.0297).abs() <= 0.003 && (m10 - 0.05).abs() <= 0.003 && gap <= 0.01;
    outcome(ok, format!("retained mean t=3 {m3:.5}, t=10 {m10:.5}; max survival gap across seeds {gap:.5}"))
}

fn dependent_limit() -> Outcome {
    let config = SimConfig {
        model: EnsembleModel::partial_dep(0.05, 1.0, gaussian()).unwrap(),
        k: 2000,
        alpha: 0.05,
        horizon: 400,
        replications: 200,
        procedure: Mode::Dependent,
        seed: 7,
    };
    let hits = exec_map(200, |rep| {
        let r = run_replication(&config, rep as u64).unwrap();
        let Some(ChangePoint::At(tau0)) = r.tau0 else { return false };
        r.trace.stops().iter().all(|&s| s == Some(tau0 + 1))
    });
    let n = hits.iter().filter(|&&h| h).count();
    outcome(n * 100 >= 95 * 200, format!("T = tau0 + 1 in {n} of 200 runs"))
}

fn uniform_optimality() -> Outcome {
    let rows = uniform_opt_dp(&optimality_instance());
    let ok = rows.len() == 3 && rows.iter().all(|r| r.proposed_is_optimal());
    let detail: Vec<String> = rows
        .iter()
        .map(|r| format!("t={} U {}={} RL {}={} CD {}={}", r.t, r.proposed_utilization, r.sup_utilization, r.proposed_run_length, r.sup_run_length, r.proposed_detections, r.inf_detections))
        .collect();
    outcome(ok, detail.join("; "))
}

fn order_properties() -> Outcome {
    let mut rng = substream(109, 0, 0);
    let monotone = h_o_monotone_check(10_000, 0.05, &mut rng);
    let axioms = partial_order_axioms(10_000, &mut rng);
    outcome(
        monotone.is_ok() && axioms.is_ok(),
        format!("monotonicity {}, axioms {}", if monotone.is_ok() { "ok" } else { "counterexample" }, axioms.err().unwrap_or_else(|| "ok".into())),
    )
}

fn metrics_bytes(exec: Execution, threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let frame = pool.install(|| run_experiment(&sim(200, 0.05, 100, 60, 3), exec).unwrap());
    let mut out = Vec::new();
    write_metrics(&mut out, &frame, &[("seed".into(), "3".into())]).unwrap();
    out
}

fn determinism() -> Outcome {
    let one = metrics_bytes(Execution::Sequential, 1);
    let same_files = one == metrics_bytes(Execution::Parallel, 1) && one == metrics_bytes(Execution::Parallel, 4);

    let model = EnsembleModel::iid(0.05, gaussian()).unwrap();
    let k = 300;
    let data: Vec<Vec<(usize, f64)>> = {
        let mut rng = substream(110, 0, 0);
        let tau = model.sample_change_points(k, &mut rng).unwrap();
        (1..=80u64).map(|t| (0..k).map(|s| (s, model.sample_observation(s, t, tau[s], &mut rng))).collect()).collect()
    };
    let config = DetectorConfig::adaptive(0.05).unwrap();
    let run = |det: &mut Detector, steps: &[Vec<(usize, f64)>]| {
        for obs in steps {
            let active: Vec<(usize, f64)> = obs.iter().copied().filter(|(s, _)| det.active().contains(*s)).collect();
            det.step(&active).unwrap();
        }
    };
    let mut whole = Detector::new(model.clone(), k, config.clone(), Execution::Parallel).unwrap();
    run(&mut whole, &data);
    let mut first = Detector::new(model.clone(), k, config.clone(), Execution::Parallel).unwrap();
    run(&mut first, &data[..37]);
    let blob = first.checkpoint().unwrap();
    let mut resumed = Detector::restore(&blob, model, config, Execution::Sequential).unwrap();
    run(&mut resumed, &data[37..]);
    let same_trace = resumed.trace() == whole.trace();
    outcome(
        same_files && same_trace,
        format!("CSV identical across 1/4 threads: {same_files}; resumed trace identical: {same_trace}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("posterior oracle equivalence", posterior_oracle),
        ("local optimality", local_optimality),
        ("four-stream instance", example3),
        ("desk-scale reproduction", desk_reproduction),
        ("no-deactivation regime", no_deactivation),
        ("limiting LFNR asymptotics", asymptotics),
        ("dependent-model limit", dependent_limit),
        ("uniform optimality", uniform_optimality),
        ("order properties", order_properties),
        ("determinism and checkpointing", determinism),
    ];
    // `cargo test` passes harness flags such as `--nocapture`; a name filter
    // restricts the run to matching criteria.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", i + 1);
        if filter.as_ref().is_some_and(|f| !label.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let elapsed: Duration = start.elapsed();
        println!("{} {label}: {} [{:.1}s]", if o.passed { "PASS" } else { "FAIL" }, o.detail, elapsed.as_secs_f64());
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
