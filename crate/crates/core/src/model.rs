// SPDX-License-Identifier: MIT OR Apache-2.0

//! Change-point priors and observation models.
//!
//! Time convention: a change point `tau = m` means observations at times
//! `1..=m` follow the pre-change density `p` and observations at times
//! `m+1, m+2, ...` follow the post-change density `q`. `tau = 0` makes every
//! observation post-change; [`ChangePoint::Never`] keeps the stream pre-change
//! forever.

use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A change point `tau_k`, possibly infinite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChangePoint {
    At(u64),
    Never,
}

impl ChangePoint {
    /// `tau < t`.
    pub fn before(self, t: u64) -> bool {
        matches!(self, ChangePoint::At(m) if m < t)
    }

    /// Whether the observation at time `t` is drawn from the post-change
    /// density, i.e. `t > tau`.
    pub fn is_post_change_at(self, t: u64) -> bool {
        self.before(t)
    }

    /// `min(tau, t)`, treating `Never` as infinity.
    pub fn min_with(self, t: u64) -> u64 {
        match self {
            ChangePoint::At(m) => m.min(t),
            ChangePoint::Never => t,
        }
    }
}

fn check_open_unit(name: &'static str, x: f64) -> Result<f64> {
    if x > 0.0 && x < 1.0 {
        Ok(x)
    } else {
        Err(Error::param(name, format!("{x} is not in (0, 1)")))
    }
}

/// Geometric prior `P(tau = m) = theta (1 - theta)^m`, `m >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricPrior {
    theta: f64,
}

impl GeometricPrior {
    pub fn new(theta: f64) -> Result<Self> {
        check_open_unit("theta", theta).map(|theta| Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mass(&self, m: u64) -> f64 {
        self.theta * (1.0 - self.theta).powf(m as f64)
    }

    /// `P(tau >= t) = (1 - theta)^t`.
    pub fn tail(&self, t: u64) -> f64 {
        (1.0 - self.theta).powf(t as f64)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChangePoint {
        let g = Geometric::new(self.theta).expect("theta validated at construction");
        ChangePoint::At(g.sample(rng))
    }
}

/// Finite-support prior given as a table `P(tau = m)` for `m = 0..len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinitePrior {
    masses: Vec<f64>,
    // suffix[m] = P(tau >= m)
    suffix: Vec<f64>,
}

impl FinitePrior {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::param("prior", "empty prior table"));
        }
        if masses.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::param("prior", "masses must lie in [0, 1]"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param("prior", format!("masses sum to {total}, not 1")));
        }
        let mut suffix = vec![0.0; masses.len() + 1];
        for m in (0..masses.len()).rev() {
            suffix[m] = suffix[m + 1] + masses[m];
        }
        Ok(Self { masses, suffix })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, m: u64) -> f64 {
        self.masses.get(m as usize).copied().unwrap_or(0.0)
    }

    /// `P(tau >= t)`.
    pub fn tail(&self, t: u64) -> f64 {
        self.suffix.get(t as usize).copied().unwrap_or(0.0)
    }

    /// `P(tau = t | tau >= t)`; 1 once the support is exhausted.
    pub fn hazard(&self, t: u64) -> f64 {
        let rest = self.tail(t);
        if rest <= 0.0 {
            1.0
        } else {
            (self.mass(t) / rest).min(1.0)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChangePoint {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (m, &p) in self.masses.iter().enumerate() {
            acc += p;
            if u < acc {
                return ChangePoint::At(m as u64);
            }
        }
        // Rounding slack: land on the last supported point.
        let last = self.masses.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        ChangePoint::At(last as u64)
    }
}

/// Pre/post-change observation densities `p` and `q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ObservationModel {
    /// `p = N(0, sigma^2)`, `q = N(mu, sigma^2)`.
    Gaussian { mu: f64, sigma: f64 },
    /// `p = Bernoulli(p0)`, `q = Bernoulli(p1)`.
    Bernoulli { p0: f64, p1: f64 },
}

impl ObservationModel {
    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::param("mu", "must be finite"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param("sigma", "must be finite and positive"));
        }
        Ok(ObservationModel::Gaussian { mu, sigma })
    }

    pub fn bernoulli(p0: f64, p1: f64) -> Result<Self> {
        check_open_unit("p0", p0)?;
        check_open_unit("p1", p1)?;
        Ok(ObservationModel::Bernoulli { p0, p1 })
    }

    /// `ln(q(x) / p(x))`.
    pub fn log_lr(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite(x));
        }
        match *self {
            ObservationModel::Gaussian { mu, sigma } => Ok((mu * x - 0.5 * mu * mu) / (sigma * sigma)),
            ObservationModel::Bernoulli { p0, p1 } => {
                if x == 1.0 {
                    Ok((p1 / p0).ln())
                } else if x == 0.0 {
                    Ok(((1.0 - p1) / (1.0 - p0)).ln())
                } else {
                    Err(Error::OutOfSupport(x))
                }
            }
        }
    }

    pub fn sample_pre<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ObservationModel::Gaussian { sigma, .. } => sigma * rng.sample::<f64, _>(StandardNormal),
            ObservationModel::Bernoulli { p0, .. } => bernoulli(rng, p0),
        }
    }

    pub fn sample_post<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ObservationModel::Gaussian { mu, sigma } => mu + sigma * rng.sample::<f64, _>(StandardNormal),
            ObservationModel::Bernoulli { p1, .. } => bernoulli(rng, p1),
        }
    }

    fn fingerprint(&self) -> String {
        match self {
            ObservationModel::Gaussian { mu, sigma } => format!("gaussian(mu={mu},sigma={sigma})"),
            ObservationModel::Bernoulli { p0, p1 } => format!("bernoulli(p0={p0},p1={p1})"),
        }
    }
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// `tau_0 ~ Geometric(theta)` shared by all streams; each stream adopts
/// `tau_0` with probability `eta` and never changes otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialDependence {
    tau0: GeometricPrior,
    eta: f64,
}

impl PartialDependence {
    pub fn new(tau0: GeometricPrior, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::param("eta", format!("{eta} is not in [0, 1]")));
        }
        Ok(Self { tau0, eta })
    }

    pub fn tau0(&self) -> GeometricPrior {
        self.tau0
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// Joint model for an ensemble of streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EnsembleModel {
    /// Independent geometric change points, common densities.
    Iid { prior: GeometricPrior, obs: ObservationModel },
    /// Shared change point adopted by each stream with probability `eta`.
    PartialDep { dep: PartialDependence, obs: ObservationModel },
    /// Independent, non-identical finite-support priors, one per stream.
    Tabular { priors: Vec<FinitePrior>, obs: Vec<ObservationModel> },
}

impl EnsembleModel {
    pub fn iid(theta: f64, obs: ObservationModel) -> Result<Self> {
        Ok(EnsembleModel::Iid {
            prior: GeometricPrior::new(theta)?,
            obs,
        })
    }

    pub fn partial_dep(theta: f64, eta: f64, obs: ObservationModel) -> Result<Self> {
        Ok(EnsembleModel::PartialDep {
            dep: PartialDependence::new(GeometricPrior::new(theta)?, eta)?,
            obs,
        })
    }

    pub fn tabular(priors: Vec<FinitePrior>, obs: Vec<ObservationModel>) -> Result<Self> {
        if priors.is_empty() {
            return Err(Error::param("prior", "tabular model needs at least one stream"));
        }
        if priors.len() != obs.len() {
            return Err(Error::LengthMismatch {
                expected: priors.len(),
                got: obs.len(),
            });
        }
        Ok(EnsembleModel::Tabular { priors, obs })
    }

    /// Four heterogeneous streams with supports in `{0, 1, 3}` and
    /// Bernoulli(0.5) / Bernoulli(0.51) observations.
    pub fn example3() -> Self {
        let rows = [
            [0.1, 0.0, 0.0, 0.9],
            [0.4, 0.6, 0.0, 0.0],
            [0.43, 0.57, 0.0, 0.0],
            [0.55, 0.0, 0.0, 0.45],
        ];
        let priors = rows
            .iter()
            .map(|r| FinitePrior::new(r.to_vec()).expect("table rows sum to one"))
            .collect();
        let obs = vec![ObservationModel::Bernoulli { p0: 0.5, p1: 0.51 }; 4];
        EnsembleModel::Tabular { priors, obs }
    }

    /// Number of streams fixed by the model, if any.
    pub fn fixed_streams(&self) -> Option<usize> {
        match self {
            EnsembleModel::Tabular { priors, .. } => Some(priors.len()),
            _ => None,
        }
    }

    pub fn check_streams(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::param("k", "need at least one stream"));
        }
        match self.fixed_streams() {
            Some(n) if n != k => Err(Error::LengthMismatch { expected: n, got: k }),
            _ => Ok(()),
        }
    }

    pub fn obs(&self, stream: usize) -> &ObservationModel {
        match self {
            EnsembleModel::Iid { obs, .. } | EnsembleModel::PartialDep { obs, .. } => obs,
            EnsembleModel::Tabular { obs, .. } => &obs[stream],
        }
    }

    /// Canonical description used to match calibration tables and
    /// checkpoints against the model that produced them.
    pub fn fingerprint(&self) -> String {
        match self {
            EnsembleModel::Iid { prior, obs } => {
                format!("iid(theta={})/{}", prior.theta(), obs.fingerprint())
            }
            EnsembleModel::PartialDep { dep, obs } => format!(
                "partial(theta={},eta={})/{}",
                dep.tau0().theta(),
                dep.eta(),
                obs.fingerprint()
            ),
            EnsembleModel::Tabular { priors, obs } => {
                let rows: Vec<String> = priors
                    .iter()
                    .zip(obs)
                    .map(|(p, o)| {
                        let m: Vec<String> = p.masses().iter().map(|x| x.to_string()).collect();
                        format!("[{}]{}", m.join(","), o.fingerprint())
                    })
                    .collect();
                format!("tabular({})", rows.join(";"))
            }
        }
    }

    /// Draws the replication-level change point `tau_0` of the dependent
    /// model; `None` for models without one.
    pub fn sample_shared<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<ChangePoint> {
        match self {
            EnsembleModel::PartialDep { dep, .. } => Some(dep.tau0().sample(rng)),
            _ => None,
        }
    }

    /// Draws `tau_k` for one stream given the shared change point (if the
    /// model has one).
    pub fn sample_stream<R: Rng + ?Sized>(&self, stream: usize, shared: Option<ChangePoint>, rng: &mut R) -> ChangePoint {
        match self {
            EnsembleModel::Iid { prior, .. } => prior.sample(rng),
            EnsembleModel::PartialDep { dep, .. } => {
                let tau0 = shared.expect("dependent model requires the shared change point");
                if rng.random::<f64>() < dep.eta() {
                    tau0
                } else {
                    ChangePoint::Never
                }
            }
            EnsembleModel::Tabular { priors, .. } => priors[stream].sample(rng),
        }
    }

    /// Draws change points for `k` streams from a single generator.
    pub fn sample_change_points<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<ChangePoint>> {
        self.check_streams(k)?;
        let shared = self.sample_shared(rng);
        Ok((0..k).map(|s| self.sample_stream(s, shared, rng)).collect())
    }

    /// Draws `X_{stream,t}`: from `p` when `t <= tau`, from `q` otherwise.
    pub fn sample_observation<R: Rng + ?Sized>(&self, stream: usize, t: u64, tau: ChangePoint, rng: &mut R) -> f64 {
        let obs = self.obs(stream);
        if tau.is_post_change_at(t) {
            obs.sample_post(rng)
        } else {
            obs.sample_pre(rng)
        }
    }

    pub fn log_lr(&self, stream: usize, x: f64) -> Result<f64> {
        self.obs(stream).log_lr(x)
    }
}
