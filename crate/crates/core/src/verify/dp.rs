// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exact dynamic programming over all LFNR-feasible procedures on tiny
//! instances with binary observations.
//!
//! A procedure picks `S_{t+1} ⊆ S_t` from everything observed through `t`,
//! subject to `mean_{k in S_{t+1}} W_{k,t} <= alpha`. With Bernoulli data the
//! history tree is finite, so the supremum of `E U_t` (and of `E RL_t`, and
//! the infimum of `E CD_t`) over every such procedure is a finite max/expect
//! recursion. Everything is computed in exact rational arithmetic so ties at
//! the level `alpha` and equalities between procedures are decided exactly.
//!
//! Streams are independent, so each active stream's posterior depends only
//! on its own history. A node is the set of active streams with their
//! observation bit strings; decision nodes are memoised per objective.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::{Error, Result};

pub type Rational = BigRational;

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

fn int(n: usize) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Change-point prior with exact masses `P(tau = m)` for `m < masses.len()`
/// and the remaining mass `tail = P(tau >= masses.len())`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactPrior {
    masses: Vec<Rational>,
    tail: Rational,
}

impl ExactPrior {
    /// Geometric prior truncated after `len` explicit masses; exact for any
    /// computation that only looks at times `t <= len`.
    pub fn geometric(theta: &Rational, len: usize) -> Self {
        let keep = Rational::one() - theta;
        let mut masses = Vec::with_capacity(len);
        let mut survive = Rational::one();
        for _ in 0..len {
            masses.push(theta * &survive);
            survive *= &keep;
        }
        Self { masses, tail: survive }
    }

    pub fn table(masses: Vec<Rational>) -> Result<Self> {
        if masses.iter().any(|m| m < &Rational::zero()) {
            return Err(Error::param("prior", "negative mass"));
        }
        let total = masses.iter().fold(Rational::zero(), |a, b| a + b);
        if total != Rational::one() {
            return Err(Error::param("prior", format!("masses sum to {total}, not 1")));
        }
        Ok(Self {
            masses,
            tail: Rational::zero(),
        })
    }

    fn mass(&self, m: usize) -> Rational {
        self.masses.get(m).cloned().unwrap_or_else(Rational::zero)
    }

    fn at_least(&self, t: usize) -> Rational {
        self.masses.iter().skip(t).fold(self.tail.clone(), |a, b| a + b)
    }
}

/// A finite instance: per-stream priors, Bernoulli pre/post success
/// probabilities, the level and the horizon.
#[derive(Clone, Debug)]
pub struct DiscreteInstance {
    priors: Vec<ExactPrior>,
    pre_one: Rational,
    post_one: Rational,
    alpha: Rational,
    horizon: usize,
}

const MAX_STREAMS: usize = 4;
const MAX_CELLS: usize = 16;

impl DiscreteInstance {
    pub fn new(priors: Vec<ExactPrior>, pre_one: Rational, post_one: Rational, alpha: Rational, horizon: usize) -> Result<Self> {
        let unit = |r: &Rational| r > &Rational::zero() && r < &Rational::one();
        if !unit(&pre_one) || !unit(&post_one) {
            return Err(Error::param("p0/p1", "Bernoulli parameters must lie in (0, 1)"));
        }
        if !(alpha > Rational::zero() && alpha <= Rational::one()) {
            return Err(Error::param("alpha", "must lie in (0, 1]"));
        }
        if priors.is_empty() || horizon == 0 {
            return Err(Error::param("instance", "need at least one stream and horizon >= 1"));
        }
        if priors.len() > MAX_STREAMS || priors.len() * horizon > MAX_CELLS {
            return Err(Error::InstanceTooLarge(format!(
                "K={} horizon={} exceeds the history-tree bound (K <= {MAX_STREAMS}, K*horizon <= {MAX_CELLS})",
                priors.len(),
                horizon
            )));
        }
        Ok(Self {
            priors,
            pre_one,
            post_one,
            alpha,
            horizon,
        })
    }

    /// Independent geometric change points with common Bernoulli densities.
    pub fn iid(k: usize, theta: Rational, pre_one: Rational, post_one: Rational, alpha: Rational, horizon: usize) -> Result<Self> {
        let prior = ExactPrior::geometric(&theta, horizon + 1);
        Self::new(vec![prior; k], pre_one, post_one, alpha, horizon)
    }

    /// Four heterogeneous finite-support streams, Bernoulli(1/2) before and
    /// Bernoulli(51/100) after the change, level 0.34, horizon 4.
    pub fn example3() -> Self {
        let rows: [[i64; 4]; 4] = [[10, 0, 0, 90], [40, 60, 0, 0], [43, 57, 0, 0], [55, 0, 0, 45]];
        let priors = rows
            .iter()
            .map(|r| ExactPrior::table(r.iter().map(|&m| ratio(m, 100)).collect()).expect("rows sum to one"))
            .collect();
        Self::new(priors, ratio(1, 2), ratio(51, 100), ratio(34, 100), 4).expect("fixed instance is valid")
    }

    pub fn k(&self) -> usize {
        self.priors.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn pmf(one: &Rational, x: u32) -> Rational {
        if x == 1 {
            one.clone()
        } else {
            Rational::one() - one
        }
    }

    /// Posterior summaries of stream `k` after observing `bits` (bit `s-1`
    /// is `x_s`) at times `1..=t`.
    fn posterior(&self, k: usize, t: usize, bits: u32) -> StreamPosterior {
        let prior = &self.priors[k];
        let xs: Vec<u32> = (0..t).map(|s| bits >> s & 1).collect();
        let likelihood = |m: usize| -> Rational {
            xs.iter().enumerate().fold(Rational::one(), |acc, (s, &x)| {
                let one = if s < m { &self.pre_one } else { &self.post_one };
                acc * Self::pmf(one, x)
            })
        };
        let all_pre = likelihood(t);
        let changed = (0..t).fold(Rational::zero(), |acc, m| acc + prior.mass(m) * likelihood(m));
        let z = &changed + prior.at_least(t) * &all_pre;
        let w = &changed / &z;
        let delta = (&changed + prior.mass(t) * &all_pre) / &z;
        let p_one = &delta * &self.post_one + (Rational::one() - &delta) * &self.pre_one;
        StreamPosterior { w, delta, p_one }
    }
}

#[derive(Clone, Debug)]
struct StreamPosterior {
    /// `P(tau < t | x_1..x_t)`.
    w: Rational,
    /// `P(tau <= t | x_1..x_t)`.
    delta: Rational,
    /// `P(x_{t+1} = 1 | x_1..x_t)`.
    p_one: Rational,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Objective {
    Utilization,
    RunLength,
    /// Number of streams still active at the horizon (`K - CD_h`).
    Survivors,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Policy {
    Optimal,
    Proposed,
    /// Keep streams with `W <= alpha` individually through `t0`, then switch
    /// to the proposed rule.
    Switching { t0: usize },
    /// Optimise, restricted before `h1` to actions that are optimal for
    /// `E U_{h1}`.
    LockedUntil { h1: usize },
}

type Node = Vec<(usize, u32)>;
type MemoKey = (usize, usize, Objective, Policy, Node);

struct Solver<'a> {
    inst: &'a DiscreteInstance,
    posteriors: HashMap<(usize, usize, u32), StreamPosterior>,
    memo: HashMap<MemoKey, Rational>,
}

impl<'a> Solver<'a> {
    fn new(inst: &'a DiscreteInstance) -> Self {
        Self {
            inst,
            posteriors: HashMap::new(),
            memo: HashMap::new(),
        }
    }

    fn post(&mut self, k: usize, t: usize, bits: u32) -> StreamPosterior {
        let inst = self.inst;
        self.posteriors
            .entry((k, t, bits))
            .or_insert_with(|| inst.posterior(k, t, bits))
            .clone()
    }

    fn root(&self) -> Node {
        (0..self.inst.k()).map(|k| (k, 0)).collect()
    }

    /// All subsets (as position lists into `node`) with mean `W <= alpha`.
    fn feasible(&mut self, t: usize, node: &Node) -> Vec<Vec<usize>> {
        let ws: Vec<Rational> = node.iter().map(|&(k, b)| self.post(k, t, b).w).collect();
        let alpha = &self.inst.alpha;
        (0u32..1 << node.len())
            .map(|mask| (0..node.len()).filter(|i| mask >> i & 1 == 1).collect::<Vec<_>>())
            .filter(|set| {
                let sum = set.iter().fold(Rational::zero(), |a, &i| a + &ws[i]);
                sum <= alpha * int(set.len())
            })
            .collect()
    }

    /// Sort ascending with ties to the smaller stream index, keep the
    /// longest prefix whose mean is at most `alpha`.
    fn proposed(&mut self, t: usize, node: &Node) -> Vec<usize> {
        let mut order: Vec<(Rational, usize, usize)> =
            node.iter().enumerate().map(|(i, &(k, b))| (self.post(k, t, b).w, k, i)).collect();
        order.sort();
        let mut sum = Rational::zero();
        let mut best = 0;
        for (n, (w, _, _)) in order.iter().enumerate() {
            sum += w;
            if sum <= &self.inst.alpha * int(n + 1) {
                best = n + 1;
            }
        }
        let mut keep: Vec<usize> = order[..best].iter().map(|&(_, _, i)| i).collect();
        keep.sort_unstable();
        keep
    }

    fn conservative(&mut self, t: usize, node: &Node) -> Vec<usize> {
        (0..node.len())
            .filter(|&i| {
                let (k, b) = node[i];
                self.post(k, t, b).w <= self.inst.alpha
            })
            .collect()
    }

    fn actions(&mut self, t: usize, node: &Node, policy: Policy) -> Vec<Vec<usize>> {
        if t == 0 {
            return vec![(0..node.len()).collect()];
        }
        match policy {
            Policy::Optimal => self.feasible(t, node),
            Policy::Proposed => vec![self.proposed(t, node)],
            Policy::Switching { t0 } if t <= t0 => vec![self.conservative(t, node)],
            Policy::Switching { .. } => vec![self.proposed(t, node)],
            Policy::LockedUntil { h1 } if t < h1 => self.argmax(t, node, h1, Objective::Utilization),
            Policy::LockedUntil { .. } => self.feasible(t, node),
        }
    }

    fn argmax(&mut self, t: usize, node: &Node, h: usize, objective: Objective) -> Vec<Vec<usize>> {
        let candidates = self.feasible(t, node);
        let scored: Vec<(Rational, Vec<usize>)> = candidates
            .into_iter()
            .map(|a| (self.q_value(t, node, &a, h, objective, Policy::Optimal), a))
            .collect();
        let best = scored.iter().map(|(q, _)| q.clone()).max().expect("empty set is always feasible");
        scored.into_iter().filter(|(q, _)| *q == best).map(|(_, a)| a).collect()
    }

    /// Expected reward collected from the decision at time `t` (which picks
    /// `S_{t+1}`) through the horizon `h`.
    fn value(&mut self, t: usize, node: &Node, h: usize, objective: Objective, policy: Policy) -> Rational {
        if t >= h {
            return Rational::zero();
        }
        let key = (t, h, objective, policy, node.clone());
        if let Some(v) = self.memo.get(&key) {
            return v.clone();
        }
        let actions = self.actions(t, node, policy);
        let best = actions
            .iter()
            .map(|a| self.q_value(t, node, a, h, objective, policy))
            .max()
            .expect("at least one action");
        self.memo.insert(key, best.clone());
        best
    }

    fn q_value(&mut self, t: usize, node: &Node, action: &[usize], h: usize, objective: Objective, policy: Policy) -> Rational {
        let posts: Vec<StreamPosterior> = action
            .iter()
            .map(|&i| {
                let (k, b) = node[i];
                self.post(k, t, b)
            })
            .collect();
        let mut total = match objective {
            Objective::Utilization => int(action.len()),
            Objective::RunLength => posts.iter().fold(Rational::zero(), |a, p| a + (Rational::one() - &p.delta)),
            Objective::Survivors if t + 1 == h => int(action.len()),
            Objective::Survivors => Rational::zero(),
        };
        if t + 1 < h {
            for outcome in 0u32..1 << action.len() {
                let mut prob = Rational::one();
                let mut next = Node::with_capacity(action.len());
                for (j, &i) in action.iter().enumerate() {
                    let x = outcome >> j & 1;
                    prob *= DiscreteInstance::pmf(&posts[j].p_one, x);
                    let (k, b) = node[i];
                    next.push((k, b | (x << t)));
                }
                total += prob * self.value(t + 1, &next, h, objective, policy);
            }
        }
        total
    }

    fn expect(&mut self, h: usize, objective: Objective, policy: Policy) -> Rational {
        let root = self.root();
        self.value(0, &root, h, objective, policy)
    }

    /// Every `t = 1` history of the full ensemble.
    fn first_histories(&self) -> Vec<Node> {
        let k = self.inst.k();
        (0u32..1 << k)
            .map(|bits| (0..k).map(|s| (s, bits >> s & 1)).collect())
            .collect()
    }
}

/// Exact expectations at one horizon `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimalityRow {
    pub t: usize,
    pub sup_utilization: Rational,
    pub proposed_utilization: Rational,
    pub sup_run_length: Rational,
    pub proposed_run_length: Rational,
    pub inf_detections: Rational,
    pub proposed_detections: Rational,
    /// Individual `W <= alpha` rule at `t = 1`, proposed rule afterwards.
    /// Reported, not gated.
    pub switching_utilization: Rational,
}

impl OptimalityRow {
    pub fn proposed_is_optimal(&self) -> bool {
        self.sup_utilization == self.proposed_utilization
            && self.sup_run_length == self.proposed_run_length
            && self.inf_detections == self.proposed_detections
    }
}

/// For every `t = 1..=horizon`: the supremum of `E U_t` and `E RL_t` and the
/// infimum of `E CD_t` over all LFNR-feasible procedures, next to the values
/// the proposed procedure attains.
pub fn uniform_opt_dp(inst: &DiscreteInstance) -> Vec<OptimalityRow> {
    let mut solver = Solver::new(inst);
    let k = int(inst.k());
    (1..=inst.horizon)
        .map(|t| {
            let survivors_opt = solver.expect(t, Objective::Survivors, Policy::Optimal);
            let survivors_prop = solver.expect(t, Objective::Survivors, Policy::Proposed);
            let (survivors_opt, survivors_prop) = if t == 1 {
                (k.clone(), k.clone())
            } else {
                (survivors_opt, survivors_prop)
            };
            OptimalityRow {
                t,
                sup_utilization: solver.expect(t, Objective::Utilization, Policy::Optimal),
                proposed_utilization: solver.expect(t, Objective::Utilization, Policy::Proposed),
                sup_run_length: solver.expect(t, Objective::RunLength, Policy::Optimal),
                proposed_run_length: solver.expect(t, Objective::RunLength, Policy::Proposed),
                inf_detections: &k - survivors_opt,
                proposed_detections: &k - survivors_prop,
                switching_utilization: solver.expect(t, Objective::Utilization, Policy::Switching { t0: 1 }),
            }
        })
        .collect()
}

/// Results of the exhaustive enumeration for the four-stream heterogeneous
/// instance. Stream labels in `maximizers_*` are 1-based.
#[derive(Clone, Debug)]
pub struct Example3Report {
    pub sup_u2: Rational,
    pub sup_u4: Rational,
    pub proposed_u2: Rational,
    pub proposed_u4: Rational,
    /// Optimal choices of `S_2` for `E U_2`, over all `t = 1` histories.
    pub maximizers_u2: Vec<Vec<usize>>,
    /// Optimal choices of `S_2` for `E U_4`, over all `t = 1` histories.
    pub maximizers_u4: Vec<Vec<usize>>,
    /// Whether one procedure attains both suprema.
    pub coexist: bool,
    /// Largest mean of `W_{1,1}, W_{2,1}, W_{3,1}` over all `t = 1` data.
    pub max_mean_123: f64,
    /// Smallest mean of `W_{1,1}, W_{2,1}, W_{4,1}`.
    pub min_mean_124: f64,
    /// Largest mean of `W_{1,1}, W_{4,1}`.
    pub max_mean_14: f64,
}

pub fn example3_enumeration() -> Example3Report {
    let inst = DiscreteInstance::example3();
    let mut solver = Solver::new(&inst);
    let sup_u2 = solver.expect(2, Objective::Utilization, Policy::Optimal);
    let sup_u4 = solver.expect(4, Objective::Utilization, Policy::Optimal);
    let proposed_u2 = solver.expect(2, Objective::Utilization, Policy::Proposed);
    let proposed_u4 = solver.expect(4, Objective::Utilization, Policy::Proposed);
    let locked_u4 = solver.expect(4, Objective::Utilization, Policy::LockedUntil { h1: 2 });

    let histories = solver.first_histories();
    let mut maximizers = |h: usize| -> Vec<Vec<usize>> {
        let mut sets = BTreeSet::new();
        for node in &histories {
            for action in solver.argmax(1, node, h, Objective::Utilization) {
                sets.insert(action.iter().map(|&i| node[i].0 + 1).collect::<Vec<_>>());
            }
        }
        sets.into_iter().collect()
    };
    let maximizers_u2 = maximizers(2);
    let maximizers_u4 = maximizers(4);

    let mean = |ws: &[Rational]| ws.iter().fold(Rational::zero(), |a, b| a + b) / int(ws.len());
    let mut max_123 = Rational::zero();
    let mut min_124 = Rational::one();
    let mut max_14 = Rational::zero();
    for node in &histories {
        let w: Vec<Rational> = node.iter().map(|&(k, b)| solver.post(k, 1, b).w).collect();
        max_123 = max_123.max(mean(&[w[0].clone(), w[1].clone(), w[2].clone()]));
        min_124 = min_124.min(mean(&[w[0].clone(), w[1].clone(), w[3].clone()]));
        max_14 = max_14.max(mean(&[w[0].clone(), w[3].clone()]));
    }
    let f = |r: &Rational| r.to_f64().unwrap_or(f64::NAN);

    Example3Report {
        coexist: locked_u4 == sup_u4,
        sup_u2,
        sup_u4,
        proposed_u2,
        proposed_u4,
        maximizers_u2,
        maximizers_u4,
        max_mean_123: f(&max_123),
        min_mean_124: f(&min_124),
        max_mean_14: f(&max_14),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example3_values() {
        let r = example3_enumeration();
        assert_eq!(r.sup_u2, int(7));
        assert_eq!(r.sup_u4, int(10));
        assert!(!r.coexist);
        assert_eq!(r.maximizers_u2, vec![vec![1, 2, 3]]);
        assert_eq!(r.maximizers_u4, vec![vec![1, 4]]);
        assert_eq!(r.proposed_u2, int(7));
        assert!(r.proposed_u4 < r.sup_u4);
        assert!(r.max_mean_123 <= 0.314);
        assert!(r.min_mean_124 >= 0.346);
        assert!(r.max_mean_14 <= 0.329);
    }

    #[test]
    fn example3_posterior_table() {
        // The t = 1 interval endpoints: all-zero and all-one histories.
        let inst = DiscreteInstance::example3();
        let lo = inst.posterior(0, 1, 0).w.to_f64().unwrap();
        let hi = inst.posterior(0, 1, 1).w.to_f64().unwrap();
        assert!((lo - 0.098).abs() < 5e-4 && (hi - 0.102).abs() < 5e-4);
        assert_eq!(inst.posterior(1, 2, 0b11).w, Rational::one());
        let lo4 = inst.posterior(3, 3, 0).w.to_f64().unwrap();
        let hi4 = inst.posterior(3, 3, 0b111).w.to_f64().unwrap();
        assert!((lo4 - 0.535).abs() < 5e-4 && (hi4 - 0.565).abs() < 5e-4);
    }

    #[test]
    fn proposed_is_optimal_on_small_iid_instance() {
        let inst = DiscreteInstance::iid(2, ratio(3, 10), ratio(2, 10), ratio(8, 10), ratio(3, 10), 3).unwrap();
        for row in uniform_opt_dp(&inst) {
            assert!(row.proposed_is_optimal(), "{row:?}");
            assert!(row.switching_utilization <= row.sup_utilization);
        }
    }

    #[test]
    fn vacuous_level_keeps_everything() {
        let inst = DiscreteInstance::iid(3, ratio(1, 4), ratio(1, 3), ratio(2, 3), Rational::one(), 4).unwrap();
        for row in uniform_opt_dp(&inst) {
            assert_eq!(row.sup_utilization, int(3 * row.t));
            assert_eq!(row.proposed_utilization, int(3 * row.t));
            assert_eq!(row.inf_detections, Rational::zero());
        }
    }

    #[test]
    fn size_bound() {
        assert!(matches!(
            DiscreteInstance::iid(5, ratio(1, 4), ratio(1, 3), ratio(2, 3), ratio(1, 10), 2),
            Err(Error::InstanceTooLarge(_))
        ));
        assert!(matches!(
            DiscreteInstance::iid(3, ratio(1, 4), ratio(1, 3), ratio(2, 3), ratio(1, 10), 6),
            Err(Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn proposed_matches_dp_on_assorted_iid_instances() {
        let cases = [
            (2, (1, 10), (1, 4), (3, 4), (1, 5), 4),
            (3, (1, 5), (2, 5), (4, 5), (1, 4), 3),
            (2, (1, 2), (1, 10), (9, 10), (2, 5), 4),
            (3, (1, 20), (3, 10), (7, 10), (1, 10), 3),
        ];
        for (k, th, p0, p1, a, h) in cases {
            let inst = DiscreteInstance::iid(k, ratio(th.0, th.1), ratio(p0.0, p0.1), ratio(p1.0, p1.1), ratio(a.0, a.1), h).unwrap();
            for row in uniform_opt_dp(&inst) {
                assert!(row.proposed_is_optimal(), "k={k} theta={th:?} alpha={a:?}: {row:?}");
            }
        }
    }
}
