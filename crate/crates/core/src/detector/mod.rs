// SPDX-License-Identifier: MIT OR Apache-2.0

//! Stream deactivation rules and the streaming detector.
//!
//! A run alternates two phases. At time `t` the detector [`select`]s
//! `S_{t+1} ⊆ S_t` from the current posteriors `W_{k,t}` and freezes the
//! dropped streams; then it [`observe`]s `x_{k,t+1}` for the retained streams
//! only and advances to `t + 1`. [`step`] does both at once.
//!
//! [`select`]: Detector::select
//! [`observe`]: Detector::observe
//! [`step`]: Detector::step

mod checkpoint;

pub use checkpoint::FORMAT_VERSION;

use crate::model::{EnsembleModel, FinitePrior};
use crate::numeric::{compensated_mean, largest_feasible_prefix};
use crate::posterior::{DependentPosteriorState, PartialDepPosterior, PosteriorState};
use crate::{Error, Execution, Result};

/// Ascending sort by `(W, stream index)`, then the longest prefix with mean
/// `W <= alpha`. Returns the retained stream indices in that sorted order.
pub fn one_step_rule(w: &[(usize, f64)], alpha: f64) -> Vec<usize> {
    let mut sorted = w.to_vec();
    let n = rank_prefix(Execution::Sequential, &mut sorted, alpha);
    sorted[..n].iter().map(|&(k, _)| k).collect()
}

fn rank_prefix(exec: Execution, w: &mut [(usize, f64)], alpha: f64) -> usize {
    exec.sort_unstable_by(w, |a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    largest_feasible_prefix(w.iter().map(|&(_, x)| x), alpha)
}

/// The currently active streams `S_t`, kept sorted by index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSet {
    members: Vec<usize>,
    flags: Vec<bool>,
}

impl ActiveSet {
    pub fn full(k: usize) -> Self {
        Self {
            members: (0..k).collect(),
            flags: vec![true; k],
        }
    }

    fn from_flags(flags: Vec<bool>) -> Self {
        let members = flags.iter().enumerate().filter(|(_, &f)| f).map(|(k, _)| k).collect();
        Self { members, flags }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.flags.get(k).copied().unwrap_or(false)
    }

    fn remove(&mut self, dropped: &[(usize, f64)]) {
        if dropped.is_empty() {
            return;
        }
        for &(k, _) in dropped {
            self.flags[k] = false;
        }
        let flags = &self.flags;
        self.members.retain(|&k| flags[k]);
    }
}

/// Provenance of a calibrated threshold table.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdMeta {
    pub theta: f64,
    pub alpha: f64,
    pub fingerprint: String,
    pub n_streams: usize,
    pub seed: u64,
}

/// Per-time posterior cutoffs `lambda_0 = 1, lambda_1, ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdTable {
    lambda: Vec<f64>,
    meta: Option<ThresholdMeta>,
}

impl ThresholdTable {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::param("lambda", "thresholds must lie in [0, 1]"));
        }
        if lambda.first() != Some(&1.0) {
            return Err(Error::param("lambda", "the table must start with lambda_0 = 1"));
        }
        Ok(Self { lambda, meta: None })
    }

    pub fn with_meta(mut self, meta: ThresholdMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn meta(&self) -> Option<&ThresholdMeta> {
        self.meta.as_ref()
    }

    pub fn lambda(&self, t: u64) -> Option<f64> {
        self.lambda.get(usize::try_from(t).ok()?).copied()
    }

    pub fn values(&self) -> &[f64] {
        &self.lambda
    }

    /// Refuses tables generated for a different model or level.
    pub fn check_compatible(&self, model: &EnsembleModel, alpha: f64) -> Result<()> {
        let Some(meta) = &self.meta else { return Ok(()) };
        let fingerprint = model.fingerprint();
        if meta.fingerprint != fingerprint {
            return Err(Error::TableMismatch(format!(
                "table was calibrated for {}, detector model is {fingerprint}",
                meta.fingerprint
            )));
        }
        if meta.alpha != alpha {
            return Err(Error::TableMismatch(format!(
                "table was calibrated at alpha={}, detector uses alpha={alpha}",
                meta.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Mode {
    /// Keep the longest ascending prefix with mean posterior `<= alpha`.
    Adaptive,
    /// Keep streams with `W_{k,t} <= lambda_t`.
    Threshold(ThresholdTable),
    /// Shared change point: stop every stream at the first `t` with `W_t > alpha`.
    Dependent,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Adaptive => "adaptive",
            Mode::Threshold(_) => "threshold",
            Mode::Dependent => "dependent",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    pub alpha: f64,
    pub mode: Mode,
}

impl DetectorConfig {
    pub fn new(alpha: f64, mode: Mode) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::param("alpha", format!("{alpha} is not in (0, 1]")));
        }
        Ok(Self { alpha, mode })
    }

    pub fn adaptive(alpha: f64) -> Result<Self> {
        Self::new(alpha, Mode::Adaptive)
    }
}

/// Outcome of one selection at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub t: u64,
    /// `S_{t+1}`, sorted by stream index.
    pub retained: Vec<usize>,
    /// `S_t \ S_{t+1}` with each stream's `W_{k,t}`, sorted by stream index.
    pub dropped: Vec<(usize, f64)>,
    /// Mean of `W_{k,t}` over `S_{t+1}`; 0 when nothing is retained.
    pub lfnr: f64,
}

/// Last time a stream was active, or censoring at the end of the run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopTime {
    Deactivated(u64),
    Censored(u64),
}

/// Per-stream stopping times and per-step summaries of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DecisionTrace {
    stops: Vec<Option<u64>>,
    active_sizes: Vec<usize>,
    lfnr: Vec<f64>,
}

impl DecisionTrace {
    fn new(k: usize) -> Self {
        Self {
            stops: vec![None; k],
            ..Self::default()
        }
    }

    /// Trace implied by known stopping times (`None` = never stopped) over
    /// `s = 1..=horizon`. No LFNR values are recorded.
    pub fn from_stops(stops: Vec<Option<u64>>, horizon: u64) -> Self {
        let active_sizes = (1..=horizon)
            .map(|s| stops.iter().filter(|t| t.is_none_or(|t| t >= s)).count())
            .collect();
        Self {
            stops,
            active_sizes,
            lfnr: Vec::new(),
        }
    }

    /// `T_k` for deactivated streams, `None` while still active.
    pub fn stops(&self) -> &[Option<u64>] {
        &self.stops
    }

    pub fn stop_time(&self, k: usize, horizon: u64) -> StopTime {
        match self.stops[k] {
            Some(t) => StopTime::Deactivated(t),
            None => StopTime::Censored(horizon),
        }
    }

    /// `|S_{s}|` for `s = 1, 2, ...`.
    pub fn active_sizes(&self) -> &[usize] {
        &self.active_sizes
    }

    /// Realised LFNR for `s = 1, 2, ...`: mean `W_{k,s-1}` over `S_s`.
    pub fn lfnr(&self) -> &[f64] {
        &self.lfnr
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Hazard {
    Constant(f64),
    Tabular(Vec<FinitePrior>),
}

impl Hazard {
    fn at(&self, k: usize, t: u64) -> f64 {
        match self {
            Hazard::Constant(theta) => *theta,
            Hazard::Tabular(priors) => priors[k].hazard(t),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Engine {
    Independent { state: PosteriorState, hazard: Hazard },
    Partial(PartialDepPosterior),
    Dependent { state: DependentPosteriorState, theta: f64 },
}

impl Engine {
    fn build(model: &EnsembleModel, k: usize, mode: &Mode) -> Result<Self> {
        if *mode == Mode::Dependent {
            return match model {
                EnsembleModel::PartialDep { dep, .. } if dep.eta() == 1.0 => Ok(Engine::Dependent {
                    state: DependentPosteriorState::new(),
                    theta: dep.tau0().theta(),
                }),
                _ => Err(Error::Unsupported(
                    "dependent mode needs the shared-change-point model with eta = 1".into(),
                )),
            };
        }
        Ok(match model {
            EnsembleModel::Iid { prior, .. } => Engine::Independent {
                state: PosteriorState::new(k),
                hazard: Hazard::Constant(prior.theta()),
            },
            EnsembleModel::Tabular { priors, .. } => Engine::Independent {
                state: PosteriorState::new(k),
                hazard: Hazard::Tabular(priors.clone()),
            },
            EnsembleModel::PartialDep { dep, .. } => Engine::Partial(PartialDepPosterior::new(*dep, k)),
        })
    }

    fn w(&self, k: usize) -> f64 {
        match self {
            Engine::Independent { state, .. } => state.w(k),
            Engine::Partial(p) => p.w(k),
            Engine::Dependent { state, .. } => state.w(),
        }
    }

    fn freeze(&mut self, k: usize) {
        match self {
            Engine::Independent { state, .. } => state.freeze(k),
            Engine::Partial(p) => p.freeze(k),
            Engine::Dependent { .. } => {}
        }
    }

    fn update(&mut self, exec: Execution, t: u64, active: &[usize], log_lrs: &[f64]) -> Result<()> {
        match self {
            Engine::Independent { state, hazard } => state.update_with(exec, |k| hazard.at(k, t), log_lrs, active),
            Engine::Partial(p) => {
                let pairs: Vec<(usize, f64)> = active.iter().copied().zip(log_lrs.iter().copied()).collect();
                p.observe(exec, &pairs)
            }
            Engine::Dependent { state, theta } => {
                if !active.is_empty() {
                    state.update_dependent(*theta, log_lrs.iter().sum());
                }
                Ok(())
            }
        }
    }
}

/// Streaming detector over `K` streams.
#[derive(Clone, Debug, PartialEq)]
pub struct Detector {
    model: EnsembleModel,
    config: DetectorConfig,
    exec: Execution,
    t: u64,
    engine: Engine,
    active: ActiveSet,
    trace: DecisionTrace,
    awaiting_data: bool,
}

impl Detector {
    pub fn new(model: EnsembleModel, k: usize, config: DetectorConfig, exec: Execution) -> Result<Self> {
        model.check_streams(k)?;
        if let Mode::Threshold(table) = &config.mode {
            table.check_compatible(&model, config.alpha)?;
        }
        let engine = Engine::build(&model, k, &config.mode)?;
        Ok(Self {
            model,
            config,
            exec,
            t: 0,
            engine,
            active: ActiveSet::full(k),
            trace: DecisionTrace::new(k),
            awaiting_data: false,
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn k(&self) -> usize {
        self.trace.stops.len()
    }

    pub fn model(&self) -> &EnsembleModel {
        &self.model
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn active(&self) -> &ActiveSet {
        &self.active
    }

    pub fn trace(&self) -> &DecisionTrace {
        &self.trace
    }

    /// Current `W_{k,t}` (frozen at `W_{k,T_k}` for deactivated streams).
    pub fn w(&self, k: usize) -> f64 {
        self.engine.w(k)
    }

    pub fn awaiting_data(&self) -> bool {
        self.awaiting_data
    }

    fn plan(&self) -> Result<Selection> {
        let t = self.t;
        let alpha = self.config.alpha;
        let members = self.active.members();
        let (mut retained, mut dropped): (Vec<usize>, Vec<(usize, f64)>) = match &self.config.mode {
            Mode::Adaptive => {
                let mut ws: Vec<(usize, f64)> = members.iter().map(|&k| (k, self.engine.w(k))).collect();
                let n = rank_prefix(self.exec, &mut ws, alpha);
                let dropped = ws.split_off(n);
                (ws.into_iter().map(|(k, _)| k).collect(), dropped)
            }
            Mode::Threshold(table) => {
                let lambda = table.lambda(t).ok_or(Error::TableExhausted(t))?;
                let mut keep = Vec::with_capacity(members.len());
                let mut drop = Vec::new();
                for &k in members {
                    let w = self.engine.w(k);
                    if w <= lambda {
                        keep.push(k);
                    } else {
                        drop.push((k, w));
                    }
                }
                (keep, drop)
            }
            Mode::Dependent => {
                if members.iter().any(|&k| self.engine.w(k) > alpha) {
                    (Vec::new(), members.iter().map(|&k| (k, self.engine.w(k))).collect())
                } else {
                    (members.to_vec(), Vec::new())
                }
            }
        };
        retained.sort_unstable();
        dropped.sort_unstable_by_key(|&(k, _)| k);
        let lfnr = compensated_mean(retained.iter().map(|&k| self.engine.w(k)));
        Ok(Selection {
            t,
            retained,
            dropped,
            lfnr,
        })
    }

    fn apply(&mut self, selection: &Selection) {
        for &(k, _) in &selection.dropped {
            self.engine.freeze(k);
            self.trace.stops[k] = Some(self.t);
        }
        self.active.remove(&selection.dropped);
        self.trace.active_sizes.push(self.active.len());
        self.trace.lfnr.push(selection.lfnr);
        self.awaiting_data = true;
    }

    /// Chooses `S_{t+1}` from `W_{.,t}` and deactivates the rest.
    pub fn select(&mut self) -> Result<Selection> {
        if self.awaiting_data {
            return Err(Error::Phase("select called twice without observe"));
        }
        let selection = self.plan()?;
        self.apply(&selection);
        Ok(selection)
    }

    /// Feeds `x_{k,t+1}` for every active stream, aligned with
    /// [`ActiveSet::members`].
    pub fn observe_aligned(&mut self, xs: &[f64]) -> Result<()> {
        if !self.awaiting_data {
            return Err(Error::Phase("observe called before select"));
        }
        let members = self.active.members();
        if xs.len() != members.len() {
            return Err(Error::LengthMismatch {
                expected: members.len(),
                got: xs.len(),
            });
        }
        let model = &self.model;
        let log_lrs = self
            .exec
            .map_range(xs.len(), |i| model.log_lr(members[i], xs[i]))
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
        self.engine.update(self.exec, self.t, members, &log_lrs)?;
        self.t += 1;
        self.awaiting_data = false;
        Ok(())
    }

    /// Feeds `(stream, x)` pairs for exactly the active streams.
    pub fn observe(&mut self, observations: &[(usize, f64)]) -> Result<()> {
        if !self.awaiting_data {
            return Err(Error::Phase("observe called before select"));
        }
        let xs = self.align(observations, None)?;
        self.observe_aligned(&xs)
    }

    /// Select followed by observe. `observations` may cover any subset of
    /// `S_t` that includes `S_{t+1}`; values for streams dropped at this step
    /// are discarded.
    pub fn step(&mut self, observations: &[(usize, f64)]) -> Result<Selection> {
        if self.awaiting_data {
            return Err(Error::Phase("step called between select and observe"));
        }
        let selection = self.plan()?;
        let xs = self.align(observations, Some(&selection))?;
        self.apply(&selection);
        self.observe_aligned(&xs)?;
        Ok(selection)
    }

    fn align(&self, observations: &[(usize, f64)], pending: Option<&Selection>) -> Result<Vec<f64>> {
        let k = self.k();
        let mut slot: Vec<Option<f64>> = vec![None; k];
        for &(s, x) in observations {
            if s >= k {
                return Err(Error::UnknownStream { index: s, streams: k });
            }
            if !self.active.contains(s) {
                return Err(Error::InactiveStream(s));
            }
            if slot[s].replace(x).is_some() {
                return Err(Error::Format(format!("duplicate observation for stream {s}")));
            }
        }
        let next: &[usize] = match pending {
            Some(sel) => &sel.retained,
            None => self.active.members(),
        };
        next.iter().map(|&s| slot[s].ok_or(Error::MissingObservation(s))).collect()
    }

    /// Serialises the state between steps.
    pub fn checkpoint(&self) -> Result<String> {
        checkpoint::write(self)
    }

    /// Rebuilds a detector from [`checkpoint`](Self::checkpoint) output. The
    /// model and configuration must match the ones that produced it.
    pub fn restore(blob: &str, model: EnsembleModel, config: DetectorConfig, exec: Execution) -> Result<Self> {
        checkpoint::read(blob, model, config, exec)
    }
}
