// SPDX-License-Identifier: MIT OR Apache-2.0

//! Online posterior probabilities `W_{k,t} = P(tau_k < t | data through t)`.
//!
//! All recursions run on log-odds `l = ln(W / (1 - W))`. `W = 0` and `W = 1`
//! map to `-inf` and `+inf` and are absorbing. With `h_t = P(tau = t | tau >= t)`
//! (the constant `theta` under a geometric prior) one step reads
//!
//! ```text
//! odds_{t+1} = L_{t+1} * (odds_t + h_t) / (1 - h_t),     L = q(x) / p(x)
//! ```
//!
//! which is the Shiryaev recursion rewritten in odds form.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ChangePoint, GeometricPrior, ObservationModel, PartialDependence};
use crate::numeric::{log_add_exp, log_sum_exp};
use crate::{Error, Execution, Result};

/// `W` from log-odds.
pub fn probability(log_odds: f64) -> f64 {
    if log_odds >= 0.0 {
        1.0 / (1.0 + (-log_odds).exp())
    } else {
        let e = log_odds.exp();
        e / (1.0 + e)
    }
}

/// Log-odds from `W`.
pub fn log_odds(w: f64) -> f64 {
    (w / (1.0 - w)).ln()
}

/// One posterior step in log-odds space for hazard `hazard` and observation
/// log-likelihood ratio `log_lr`.
pub fn shiryaev_step(log_odds: f64, hazard: f64, log_lr: f64) -> f64 {
    if log_odds == f64::INFINITY {
        return f64::INFINITY;
    }
    let inner = log_add_exp(log_odds, hazard.ln());
    if inner == f64::NEG_INFINITY {
        // tau >= t+1 for sure: no change can have happened yet.
        return f64::NEG_INFINITY;
    }
    if hazard >= 1.0 || log_lr == f64::INFINITY {
        return f64::INFINITY;
    }
    log_lr + inner - (-hazard).ln_1p()
}

/// `delta = theta + (1 - theta) v`: the posterior probability that the
/// change has happened by time `t` inclusive, given `v = P(tau < t | data)`.
pub fn delta_from_v(theta: f64, v: f64) -> f64 {
    theta + (1.0 - theta) * v
}

/// Per-stream posterior state for independent change points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    t: u64,
    log_odds: Vec<f64>,
    frozen: Vec<bool>,
}

impl PosteriorState {
    /// `W_{k,0} = 0` for all `k`.
    pub fn new(k: usize) -> Self {
        Self {
            t: 0,
            log_odds: vec![f64::NEG_INFINITY; k],
            frozen: vec![false; k],
        }
    }

    pub(crate) fn from_parts(t: u64, log_odds: Vec<f64>, frozen: Vec<bool>) -> Result<Self> {
        if log_odds.len() != frozen.len() {
            return Err(Error::LengthMismatch {
                expected: log_odds.len(),
                got: frozen.len(),
            });
        }
        Ok(Self { t, log_odds, frozen })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.log_odds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_odds.is_empty()
    }

    pub fn w(&self, k: usize) -> f64 {
        probability(self.log_odds[k])
    }

    pub fn log_odds(&self, k: usize) -> f64 {
        self.log_odds[k]
    }

    pub fn all_log_odds(&self) -> &[f64] {
        &self.log_odds
    }

    pub fn is_frozen(&self, k: usize) -> bool {
        self.frozen[k]
    }

    pub fn frozen_flags(&self) -> &[bool] {
        &self.frozen
    }

    /// Freezes stream `k` at its current value.
    pub fn freeze(&mut self, k: usize) {
        self.frozen[k] = true;
    }

    /// Shiryaev update under a geometric prior with parameter `theta` for
    /// the streams in `active`, with `log_lrs[i]` belonging to `active[i]`.
    pub fn update_w(&mut self, theta: f64, log_lrs: &[f64], active: &[usize]) -> Result<()> {
        self.update_with(Execution::Sequential, |_| theta, log_lrs, active)
    }

    /// Same as [`update_w`](Self::update_w) with a per-stream hazard
    /// `hazard(k) = P(tau_k = t | tau_k >= t)` at the current `t`.
    pub fn update_with<H>(&mut self, exec: Execution, hazard: H, log_lrs: &[f64], active: &[usize]) -> Result<()>
    where
        H: Fn(usize) -> f64 + Sync + Send,
    {
        if log_lrs.len() != active.len() {
            return Err(Error::LengthMismatch {
                expected: active.len(),
                got: log_lrs.len(),
            });
        }
        for &k in active {
            if k >= self.len() {
                return Err(Error::UnknownStream {
                    index: k,
                    streams: self.len(),
                });
            }
            if self.frozen[k] {
                return Err(Error::FrozenStream(k));
            }
        }
        let current = &self.log_odds;
        let updated = exec.map_range(active.len(), |i| {
            let k = active[i];
            shiryaev_step(current[k], hazard(k), log_lrs[i])
        });
        for (&k, l) in active.iter().zip(updated) {
            self.log_odds[k] = l;
        }
        self.t += 1;
        Ok(())
    }
}

/// Posterior of the shared change point when every stream changes at
/// `tau_0`, carried as `ln rho_t` with `rho_t = Q_t / (1 - theta)^t` the
/// posterior odds of `tau_0 < t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependentPosteriorState {
    t: u64,
    log_rho: f64,
}

impl Default for DependentPosteriorState {
    fn default() -> Self {
        Self::new()
    }
}

impl DependentPosteriorState {
    pub fn new() -> Self {
        Self {
            t: 0,
            log_rho: f64::NEG_INFINITY,
        }
    }

    pub(crate) fn from_parts(t: u64, log_rho: f64) -> Self {
        Self { t, log_rho }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn log_rho(&self) -> f64 {
        self.log_rho
    }

    pub fn w(&self) -> f64 {
        probability(self.log_rho)
    }

    /// `rho_{t+1} = exp(sum_log_lr) (theta + rho_t) / (1 - theta)`, where
    /// `sum_log_lr` adds the log-likelihood ratios of all streams at `t+1`.
    pub fn update_dependent(&mut self, theta: f64, sum_log_lr: f64) {
        self.log_rho = shiryaev_step(self.log_rho, theta, sum_log_lr);
        self.t += 1;
    }
}

/// Exact streaming posterior for the partially dependent model.
///
/// For every candidate `m < t` of the shared change point the state keeps,
/// per stream, `C_k(m) = sum_{s=m+1}^{n_k} ln L_{k,s}`. A stream's evidence
/// given `tau_0 = m` is `f_k(m) = eta e^{C_k(m)} + 1 - eta`, so
///
/// ```text
/// P(tau_0 = m | data) ∝ theta (1-theta)^m prod_k f_k(m),   m < t
/// P(tau_0 >= t | data) ∝ (1-theta)^t
/// W_{k,t} = sum_{m<t} P(tau_0 = m | data) eta e^{C_k(m)} / f_k(m)
/// ```
///
/// Each observation costs `O(t)` per stream. Frozen streams stop receiving
/// data; their evidence is folded into a fixed per-`m` total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialDepPosterior {
    dep: PartialDependence,
    t: u64,
    cumulative: Vec<Vec<f64>>,
    frozen: Vec<bool>,
    frozen_log_evidence: Vec<f64>,
    w: Vec<f64>,
}

impl PartialDepPosterior {
    pub fn new(dep: PartialDependence, k: usize) -> Self {
        Self {
            dep,
            t: 0,
            cumulative: vec![Vec::new(); k],
            frozen: vec![false; k],
            frozen_log_evidence: Vec::new(),
            w: vec![0.0; k],
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn w(&self, k: usize) -> f64 {
        self.w[k]
    }

    pub fn is_frozen(&self, k: usize) -> bool {
        self.frozen[k]
    }

    /// `(cumulative, frozen, frozen_log_evidence, w)`.
    #[allow(clippy::type_complexity)]
    pub(crate) fn parts(&self) -> (&[Vec<f64>], &[bool], &[f64], &[f64]) {
        (&self.cumulative, &self.frozen, &self.frozen_log_evidence, &self.w)
    }

    pub(crate) fn from_parts(
        dep: PartialDependence,
        t: u64,
        cumulative: Vec<Vec<f64>>,
        frozen: Vec<bool>,
        frozen_log_evidence: Vec<f64>,
        w: Vec<f64>,
    ) -> Result<Self> {
        let k = w.len();
        let consistent = cumulative.len() == k
            && frozen.len() == k
            && frozen_log_evidence.len() == t as usize
            && cumulative
                .iter()
                .zip(&frozen)
                .all(|(c, &f)| c.len() == if f { 0 } else { t as usize });
        if !consistent {
            return Err(Error::Format("inconsistent partial-dependence state".into()));
        }
        Ok(Self {
            dep,
            t,
            cumulative,
            frozen,
            frozen_log_evidence,
            w,
        })
    }

    fn log_evidence(&self, c: f64) -> f64 {
        let eta = self.dep.eta();
        log_add_exp(eta.ln() + c, (1.0 - eta).ln())
    }

    pub fn freeze(&mut self, k: usize) {
        if self.frozen[k] {
            return;
        }
        let cum = std::mem::take(&mut self.cumulative[k]);
        for (m, &c) in cum.iter().enumerate() {
            self.frozen_log_evidence[m] += self.log_evidence(c);
        }
        self.frozen[k] = true;
    }

    /// Adds the observations at time `t+1`; `observations` must hold exactly
    /// one `(stream, log_lr)` entry for every unfrozen stream.
    pub fn observe(&mut self, exec: Execution, observations: &[(usize, f64)]) -> Result<()> {
        let unfrozen = self.frozen.iter().filter(|&&f| !f).count();
        let mut seen = vec![false; self.len()];
        for &(k, _) in observations {
            if k >= self.len() {
                return Err(Error::UnknownStream {
                    index: k,
                    streams: self.len(),
                });
            }
            if self.frozen[k] {
                return Err(Error::FrozenStream(k));
            }
            seen[k] = true;
        }
        if observations.len() != unfrozen {
            let missing = (0..self.len()).find(|&k| !self.frozen[k] && !seen[k]);
            return Err(match missing {
                Some(k) => Error::MissingObservation(k),
                None => Error::LengthMismatch {
                    expected: unfrozen,
                    got: observations.len(),
                },
            });
        }
        for &(k, l) in observations {
            let cum = &mut self.cumulative[k];
            cum.iter_mut().for_each(|c| *c += l);
            cum.push(l);
        }
        self.frozen_log_evidence.push(0.0);
        self.t += 1;
        self.recompute(exec);
        Ok(())
    }

    fn recompute(&mut self, exec: Execution) {
        let t = self.t as usize;
        let active: Vec<usize> = (0..self.len()).filter(|&k| !self.frozen[k]).collect();
        let evidence: Vec<Vec<f64>> = exec.map_slice(&active, |&k| {
            self.cumulative[k].iter().map(|&c| self.log_evidence(c)).collect()
        });
        let theta = self.dep.tau0().theta();
        let (log_theta, log_keep) = (theta.ln(), (-theta).ln_1p());
        let mut log_post: Vec<f64> = (0..t)
            .map(|m| log_theta + m as f64 * log_keep + self.frozen_log_evidence[m])
            .collect();
        for ev in &evidence {
            for (lp, e) in log_post.iter_mut().zip(ev) {
                *lp += e;
            }
        }
        let tail = t as f64 * log_keep;
        log_post.push(tail);
        let z = log_sum_exp(&log_post);
        let post: Vec<f64> = log_post[..t].iter().map(|&lp| (lp - z).exp()).collect();
        let log_eta = self.dep.eta().ln();
        let ws = exec.map_range(active.len(), |i| {
            let cum = &self.cumulative[active[i]];
            cum.iter()
                .zip(&evidence[i])
                .zip(&post)
                .map(|((&c, &e), &p)| p * (log_eta + c - e).exp())
                .sum::<f64>()
                .clamp(0.0, 1.0)
        });
        for (&k, w) in active.iter().zip(ws) {
            self.w[k] = w;
        }
    }
}

/// Exact `W_{k,t}` under the partially dependent model from a full
/// `K x t` matrix of log-likelihood ratios (`log_lrs[k][s-1]` is stream `k`
/// at time `s`).
pub fn posterior_partial_dep(dep: PartialDependence, log_lrs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let t = log_lrs.first().map_or(0, Vec::len);
    if let Some(row) = log_lrs.iter().find(|r| r.len() != t) {
        return Err(Error::LengthMismatch { expected: t, got: row.len() });
    }
    let mut post = PartialDepPosterior::new(dep, log_lrs.len());
    for s in 0..t {
        let column: Vec<(usize, f64)> = log_lrs.iter().enumerate().map(|(k, r)| (k, r[s])).collect();
        post.observe(Execution::Sequential, &column)?;
    }
    Ok((0..log_lrs.len()).map(|k| post.w(k)).collect())
}

/// Simulates one never-deactivated stream and returns `V_0..=V_horizon`.
pub fn v_path<R: Rng + ?Sized>(prior: GeometricPrior, obs: &ObservationModel, horizon: u64, rng: &mut R) -> Vec<f64> {
    let tau: ChangePoint = prior.sample(rng);
    let mut l = f64::NEG_INFINITY;
    let mut path = Vec::with_capacity(horizon as usize + 1);
    path.push(0.0);
    for t in 1..=horizon {
        let x = if tau.is_post_change_at(t) {
            obs.sample_post(rng)
        } else {
            obs.sample_pre(rng)
        };
        let lr = obs.log_lr(x).expect("sampled values are in the support");
        l = shiryaev_step(l, prior.theta(), lr);
        path.push(probability(l));
    }
    path
}
