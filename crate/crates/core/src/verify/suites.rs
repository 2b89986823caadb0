// SPDX-License-Identifier: MIT OR Apache-2.0

//! Named oracle suites with one pass/fail line per check.

use std::fmt;

use rand::Rng;

use super::dp::{example3_enumeration, ratio, uniform_opt_dp, DiscreteInstance};
use super::oracle::{brute_force_dependent, brute_force_partial_dep, brute_force_posterior, brute_force_subset};
use super::order::{h_o_monotone_check, i_o, partial_order_axioms, OrderedVec};
use crate::detector::one_step_rule;
use crate::model::{GeometricPrior, ObservationModel, PartialDependence};
use crate::posterior::{posterior_partial_dep, DependentPosteriorState, PosteriorState};
use crate::rng::{substream, StreamRng};
use crate::{Error, Result};

pub const SUITES: [&str; 5] = ["posterior", "subset", "example3", "optimality", "order"];

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Runs one suite (or `all`) with randomness drawn from `seed`.
pub fn run_suite(name: &str, seed: u64) -> Result<Vec<Check>> {
    let mut rng = substream(seed, 0, 0);
    match name {
        "posterior" => Ok(posterior_suite(&mut rng, 1000)),
        "subset" => Ok(subset_suite(&mut rng, 1000)),
        "example3" => Ok(example3_suite()),
        "optimality" => Ok(optimality_suite()),
        "order" => Ok(order_suite(&mut rng, 10_000)),
        "all" => SUITES.iter().map(|s| run_suite(s, seed)).collect::<Result<Vec<_>>>().map(|v| v.concat()),
        other => Err(Error::param("suite", format!("unknown suite `{other}`; expected one of {}, all", SUITES.join(", ")))),
    }
}

/// Largest `|update_w - brute_force_posterior|` over random Gaussian-shift
/// sequences with `theta` in {0.01, 0.05, 0.3} and `t <= 25`.
pub fn posterior_max_error(rng: &mut StreamRng, sequences: usize) -> f64 {
    let obs = ObservationModel::gaussian(1.0, 1.0).expect("valid model");
    let mut worst: f64 = 0.0;
    for i in 0..sequences {
        let theta = [0.01, 0.05, 0.3][i % 3];
        let prior = GeometricPrior::new(theta).expect("valid theta");
        let t = rng.random_range(1..=25u64);
        let tau = prior.sample(rng);
        let lrs: Vec<f64> = (1..=t)
            .map(|s| {
                let x = if tau.is_post_change_at(s) { obs.sample_post(rng) } else { obs.sample_pre(rng) };
                obs.log_lr(x).expect("finite draw")
            })
            .collect();
        let mut state = PosteriorState::new(1);
        for (s, &l) in lrs.iter().enumerate() {
            state.update_w(theta, &[l], &[0]).expect("single active stream");
            let diff = (state.w(0) - brute_force_posterior(theta, &lrs[..=s])).abs();
            worst = worst.max(diff);
        }
    }
    worst
}

fn posterior_suite(rng: &mut StreamRng, sequences: usize) -> Vec<Check> {
    let worst = posterior_max_error(rng, sequences);
    let mut out = vec![check(
        "posterior.independent",
        worst <= 1e-10,
        format!("max |Δ| = {worst:.3e} over {sequences} sequences (bound 1e-10)"),
    )];

    let mut dep_worst: f64 = 0.0;
    for _ in 0..200 {
        let theta = rng.random_range(0.01..0.5);
        let t = rng.random_range(1..=8);
        let sums: Vec<f64> = (0..t).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut state = DependentPosteriorState::new();
        for (s, &l) in sums.iter().enumerate() {
            state.update_dependent(theta, l);
            dep_worst = dep_worst.max((state.w() - brute_force_dependent(theta, &sums[..=s])).abs());
        }
    }
    out.push(check(
        "posterior.dependent",
        dep_worst <= 1e-10,
        format!("max |Δ| = {dep_worst:.3e} (bound 1e-10)"),
    ));

    let mut partial_worst: f64 = 0.0;
    for _ in 0..100 {
        let theta = rng.random_range(0.02..0.4);
        let eta = rng.random_range(0.0..=1.0);
        let k = rng.random_range(1..=3);
        let t = rng.random_range(1..=6);
        let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..t).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let dep = PartialDependence::new(GeometricPrior::new(theta).expect("valid"), eta).expect("valid");
        let fast = posterior_partial_dep(dep, &rows).expect("rectangular input");
        let slow = brute_force_partial_dep(theta, eta, &rows);
        for (a, b) in fast.iter().zip(&slow) {
            partial_worst = partial_worst.max((a - b).abs());
        }
    }
    out.push(check(
        "posterior.partial",
        partial_worst <= 1e-10,
        format!("max |Δ| = {partial_worst:.3e} (bound 1e-10)"),
    ));
    out
}

/// Random probability vectors with deliberate ties and values near `alpha`.
pub fn random_weights(rng: &mut StreamRng, alpha: f64, max_len: usize) -> Vec<f64> {
    let n = rng.random_range(0..=max_len);
    let grid = rng.random_bool(0.5);
    (0..n)
        .map(|_| {
            if grid {
                // Multiples of alpha / 4 produce many exact ties.
                (f64::from(rng.random_range(0..12u32)) * alpha / 4.0).min(1.0)
            } else {
                rng.random::<f64>().powi(3)
            }
        })
        .collect()
}

/// Tie-heavy and boundary vectors where rounding decides feasibility.
pub fn adversarial_weights() -> Vec<(Vec<f64>, f64)> {
    vec![
        (vec![0.05; 3], 0.05),
        (vec![0.05; 12], 0.05),
        (vec![0.1, 0.2], 0.15),
        (vec![0.2, 0.1, 0.1, 0.2], 0.15),
        (vec![0.3; 7], 0.3),
        (vec![0.0, 0.1, 0.1, 0.1], 0.075),
        (vec![1.0, 0.0, 1.0, 0.0], 0.5),
        (vec![0.07, 0.03, 0.07, 0.03, 0.05], 0.05),
        (vec![1.0 / 3.0; 3], 1.0 / 3.0),
        (vec![0.6, 0.7], 0.05),
        (vec![], 0.05),
    ]
}

/// Compares the one-step rule with the exhaustive subset oracle and the
/// prefix map; returns a description of the first disagreement.
pub fn subset_agreement(w: &[f64], alpha: f64) -> std::result::Result<(), String> {
    let indexed: Vec<(usize, f64)> = w.iter().copied().enumerate().collect();
    let kept = one_step_rule(&indexed, alpha);
    let best = brute_force_subset(w, alpha).map_err(|e| e.to_string())?;
    let io = i_o(&OrderedVec::from_unsorted(w.to_vec()).map_err(|e| e.to_string())?, alpha);
    if kept.len() != best || io != best {
        return Err(format!("w={w:?} alpha={alpha}: rule kept {}, oracle {best}, I_o {io}", kept.len()));
    }
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));
    if kept[..] != order[..kept.len()] {
        return Err(format!("w={w:?} alpha={alpha}: kept {kept:?} is not the sorted prefix"));
    }
    Ok(())
}

fn subset_suite(rng: &mut StreamRng, vectors: usize) -> Vec<Check> {
    let mut failure = None;
    for _ in 0..vectors {
        let alpha = [0.05, 0.1, 0.3][rng.random_range(0..3)];
        let w = random_weights(rng, alpha, 12);
        if let Err(e) = subset_agreement(&w, alpha) {
            failure = Some(e);
            break;
        }
    }
    let adversarial = adversarial_weights();
    let adv_failure = adversarial.iter().find_map(|(w, a)| subset_agreement(w, *a).err());
    vec![
        check(
            "subset.random",
            failure.is_none(),
            failure.unwrap_or_else(|| format!("{vectors} vectors, retained size equals exhaustive optimum")),
        ),
        check(
            "subset.adversarial",
            adv_failure.is_none(),
            adv_failure.unwrap_or_else(|| format!("{} tie/boundary cases agree", adversarial.len())),
        ),
    ]
}

fn example3_suite() -> Vec<Check> {
    let r = example3_enumeration();
    let summary = format!("U2={} U4={} coexist={}", r.sup_u2, r.sup_u4, r.coexist);
    let values_ok = r.sup_u2 == ratio(7, 1) && r.sup_u4 == ratio(10, 1) && !r.coexist;
    let bounds_ok = r.max_mean_123 <= 0.314 && r.min_mean_124 >= 0.346 && r.max_mean_14 <= 0.329;
    let maximizers_ok = r.maximizers_u2 == [vec![1, 2, 3]] && r.maximizers_u4 == [vec![1, 4]];
    vec![
        check("example3.values", values_ok, summary),
        check(
            "example3.maximizers",
            maximizers_ok,
            format!("S_2 for U2: {:?}; S_2 for U4: {:?}", r.maximizers_u2, r.maximizers_u4),
        ),
        check(
            "example3.t1_bounds",
            bounds_ok,
            format!(
                "max mean{{1,2,3}}={:.4} min mean{{1,2,4}}={:.4} max mean{{1,4}}={:.4}",
                r.max_mean_123, r.min_mean_124, r.max_mean_14
            ),
        ),
        check(
            "example3.proposed",
            r.proposed_u2 == r.sup_u2 && r.proposed_u4 < r.sup_u4,
            format!("proposed U2={} U4={}", r.proposed_u2, r.proposed_u4),
        ),
    ]
}

/// The two-stream Bernoulli instance used for the uniform-optimality check.
pub fn optimality_instance() -> DiscreteInstance {
    DiscreteInstance::iid(2, ratio(3, 10), ratio(2, 10), ratio(8, 10), ratio(3, 10), 3).expect("fixed instance")
}

fn optimality_suite() -> Vec<Check> {
    uniform_opt_dp(&optimality_instance())
        .into_iter()
        .map(|row| {
            check(
                &format!("optimality.t{}", row.t),
                row.proposed_is_optimal(),
                format!(
                    "U sup={} proposed={}; RL sup={} proposed={}; CD inf={} proposed={}; switching U={}",
                    row.sup_utilization,
                    row.proposed_utilization,
                    row.sup_run_length,
                    row.proposed_run_length,
                    row.inf_detections,
                    row.proposed_detections,
                    row.switching_utilization
                ),
            )
        })
        .collect()
}

fn order_suite(rng: &mut StreamRng, trials: usize) -> Vec<Check> {
    let monotone = h_o_monotone_check(trials, 0.05, rng);
    let axioms = partial_order_axioms(trials, rng);
    vec![
        check(
            "order.h_o_monotone",
            monotone.is_ok(),
            match monotone {
                Ok(()) => format!("{trials} random pairs"),
                Err(c) => format!("counterexample u={:?} v={:?}", c.u.as_slice(), c.v.as_slice()),
            },
        ),
        check(
            "order.axioms",
            axioms.is_ok(),
            axioms.err().unwrap_or_else(|| format!("{trials} random triples")),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite() {
        assert!(run_suite("nosuch", 1).is_err());
    }

    #[test]
    fn cheap_suites_pass() {
        for name in ["subset", "order", "example3"] {
            for c in run_suite(name, 2).unwrap() {
                assert!(c.passed, "{c}");
            }
        }
    }

    #[test]
    fn example3_line() {
        let checks = run_suite("example3", 0).unwrap();
        assert_eq!(checks[0].detail, "U2=7 U4=10 coexist=false");
    }
}
