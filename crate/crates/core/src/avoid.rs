//! Avoiding (non-crossing) ensembles of random-walk bridges.
//!
//! The avoidance event is the weak ordering `f >= Q_1 >= ... >= Q_k >= g` on
//! a constraint set `S`. Two samplers target the conditioned law: rejection
//! (independent bridges, exact draws) and a single-site Metropolis chain
//! whose proposals flip one curve value by one unit. The chain is the
//! constructive device behind the monotone coupling: two chains driven by the
//! same proposal/uniform stream preserve the pointwise ordering of their
//! states when the Hamiltonian is convex.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::{BridgeSampler, BridgeSpec, DiscretePath};
use crate::error::{Error, Result};
use crate::hamiltonian::{validate, Hamiltonian};

/// Times at which the avoidance ordering is enforced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintSet {
    /// The whole time interval.
    All,
    /// An explicit subset of times.
    Times(BTreeSet<i64>),
}

impl ConstraintSet {
    pub fn contains(&self, t: i64) -> bool {
        match self {
            ConstraintSet::All => true,
            ConstraintSet::Times(set) => set.contains(&t),
        }
    }
}

/// Entry/exit data, barriers, and constraint set of an avoiding ensemble.
///
/// `entry`/`exit` are weakly decreasing; barriers are arbitrary integer
/// functions on the full interval (`None` means unbounded on that side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceSpec {
    pub t0: i64,
    pub t1: i64,
    pub entry: Vec<i64>,
    pub exit: Vec<i64>,
    pub top: Option<Vec<i64>>,
    pub bottom: Option<Vec<i64>>,
    pub constraint: ConstraintSet,
}

impl AvoidanceSpec {
    pub fn new(t0: i64, t1: i64, entry: Vec<i64>, exit: Vec<i64>) -> Self {
        AvoidanceSpec { t0, t1, entry, exit, top: None, bottom: None, constraint: ConstraintSet::All }
    }

    pub fn with_top(mut self, top: Vec<i64>) -> Self {
        self.top = Some(top);
        self
    }

    pub fn with_bottom(mut self, bottom: Vec<i64>) -> Self {
        self.bottom = Some(bottom);
        self
    }

    pub fn with_constraint(mut self, times: impl IntoIterator<Item = i64>) -> Self {
        self.constraint = ConstraintSet::Times(times.into_iter().collect());
        self
    }

    pub fn k(&self) -> usize {
        self.entry.len()
    }

    pub fn span(&self) -> i64 {
        self.t1 - self.t0
    }

    pub fn bridge_spec(&self, curve: usize) -> BridgeSpec {
        BridgeSpec::new(self.t0, self.t1, self.entry[curve], self.exit[curve])
    }

    /// Top barrier value at `t` (`+inf` when absent).
    pub fn top_at(&self, t: i64) -> f64 {
        match &self.top {
            Some(f) => f[(t - self.t0) as usize] as f64,
            None => f64::INFINITY,
        }
    }

    /// Bottom barrier value at `t` (`-inf` when absent).
    pub fn bottom_at(&self, t: i64) -> f64 {
        match &self.bottom {
            Some(g) => g[(t - self.t0) as usize] as f64,
            None => f64::NEG_INFINITY,
        }
    }

    pub fn validate(&self, h: &Hamiltonian) -> Result<()> {
        if self.t0 >= self.t1 {
            return Err(Error::domain(format!("need t0 < t1, got [{}, {}]", self.t0, self.t1)));
        }
        if self.entry.is_empty() || self.entry.len() != self.exit.len() {
            return Err(Error::domain("entry and exit data must be nonempty and of equal length"));
        }
        for v in [&self.entry, &self.exit] {
            if v.windows(2).any(|w| w[0] < w[1]) {
                return Err(Error::domain(format!("data {v:?} is not weakly decreasing")));
            }
        }
        let len = (self.span() + 1) as usize;
        for (name, barrier) in [("top", &self.top), ("bottom", &self.bottom)] {
            if let Some(b) = barrier {
                if b.len() != len {
                    return Err(Error::domain(format!(
                        "{name} barrier has {} values, expected {len}",
                        b.len()
                    )));
                }
            }
        }
        if let ConstraintSet::Times(set) = &self.constraint {
            if let Some(t) = set.iter().find(|t| **t < self.t0 || **t > self.t1) {
                return Err(Error::domain(format!("constraint time {t} outside [{}, {}]", self.t0, self.t1)));
            }
        }
        for i in 0..self.k() {
            self.bridge_spec(i).validate(h)?;
        }
        Ok(())
    }

    /// Times of the constraint set, in increasing order.
    pub fn constraint_times(&self) -> Vec<i64> {
        match &self.constraint {
            ConstraintSet::All => (self.t0..=self.t1).collect(),
            ConstraintSet::Times(set) => set.iter().copied().collect(),
        }
    }

    /// Weak avoidance check: `f >= Q_1 >= ... >= Q_k >= g` at every `t` in `S`.
    pub fn is_avoiding(&self, ensemble: &DiscreteEnsemble) -> bool {
        for t in self.constraint_times() {
            let idx = (t - self.t0) as usize;
            let first = ensemble.curves[0][idx] as f64;
            if first > self.top_at(t) {
                return false;
            }
            for w in ensemble.curves.windows(2) {
                if w[0][idx] < w[1][idx] {
                    return false;
                }
            }
            let last = ensemble.curves[ensemble.k() - 1][idx] as f64;
            if last < self.bottom_at(t) {
                return false;
            }
        }
        true
    }
}

/// `k` integer-valued curves on a common integer time interval.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscreteEnsemble {
    pub t0: i64,
    pub curves: Vec<Vec<i64>>,
}

impl DiscreteEnsemble {
    pub fn from_paths(paths: Vec<DiscretePath>) -> Self {
        let t0 = paths[0].t0;
        DiscreteEnsemble { t0, curves: paths.into_iter().map(|p| p.values).collect() }
    }

    pub fn k(&self) -> usize {
        self.curves.len()
    }

    pub fn t1(&self) -> i64 {
        self.t0 + self.curves[0].len() as i64 - 1
    }

    pub fn value(&self, curve: usize, t: i64) -> i64 {
        self.curves[curve][(t - self.t0) as usize]
    }

    pub fn curve_path(&self, curve: usize) -> DiscretePath {
        DiscretePath::new(self.t0, self.curves[curve].clone())
    }

    /// Pointwise comparison: every value of `self` at most that of `other`.
    pub fn dominated_by(&self, other: &DiscreteEnsemble) -> bool {
        self.curves
            .iter()
            .zip(&other.curves)
            .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x <= y))
    }
}

/// The pointwise-maximal element of the avoiding set.
///
/// Built one curve at a time from the top: each curve is the largest
/// admissible path below the envelope formed by the top barrier and the
/// previously built curve (on the constraint set), computed by a forward
/// `+beta` sweep and a backward `-alpha` sweep. With no top barrier this is
/// the closed-form initial state `min(x_i + beta (t - T0), y_i - alpha (T1 - t))`.
/// Errors with `Infeasible` when the avoiding set is empty.
pub fn maximal_config(h: &Hamiltonian, spec: &AvoidanceSpec) -> Result<DiscreteEnsemble> {
    spec.validate(h)?;
    let len = (spec.span() + 1) as usize;
    let (alpha, beta) = (h.alpha(), h.beta());

    let mut curves: Vec<Vec<i64>> = Vec::with_capacity(spec.k());
    for i in 0..spec.k() {
        let (x, y) = (spec.entry[i], spec.exit[i]);
        // Upper envelope at constrained times: top barrier and previous curve.
        let env = |idx: usize| -> i64 {
            let t = spec.t0 + idx as i64;
            if !spec.constraint.contains(t) {
                return i64::MAX;
            }
            let mut e = i64::MAX;
            if let Some(f) = &spec.top {
                e = e.min(f[idx]);
            }
            if i > 0 {
                e = e.min(curves[i - 1][idx]);
            }
            e
        };

        let mut u = vec![0i64; len];
        u[0] = x.min(env(0));
        if u[0] < x {
            return Err(Error::infeasible(format!(
                "curve {} entry {x} exceeds its upper envelope at T0",
                i + 1
            )));
        }
        for idx in 1..len {
            u[idx] = (u[idx - 1] + beta).min(env(idx));
        }
        if u[len - 1] < y {
            return Err(Error::infeasible(format!(
                "curve {} cannot reach exit {y} below its upper envelope",
                i + 1
            )));
        }
        u[len - 1] = y;
        for idx in (0..len - 1).rev() {
            u[idx] = u[idx].min(u[idx + 1] - alpha);
        }
        if u[0] != x {
            return Err(Error::infeasible(format!(
                "curve {} entry {x} inconsistent with its upper envelope",
                i + 1
            )));
        }
        curves.push(u);
    }

    let config = DiscreteEnsemble { t0: spec.t0, curves };
    // The construction dominates every avoiding ensemble, so a bottom-barrier
    // violation certifies emptiness.
    if let Some(g) = &spec.bottom {
        for t in spec.constraint_times() {
            let idx = (t - spec.t0) as usize;
            if config.curves[spec.k() - 1][idx] < g[idx] {
                return Err(Error::infeasible(format!(
                    "maximal configuration violates the bottom barrier at t = {t}"
                )));
            }
        }
    }
    debug_assert!(spec.is_avoiding(&config));
    Ok(config)
}

/// A single-site proposal: flip curve `curve` at time `t` by `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub curve: usize,
    pub t: i64,
    pub delta: i64,
}

/// Weight ratio of the candidate against the current state, or `None` when
/// the candidate leaves the avoiding set (including all endpoint moves,
/// which would change the pinned entry/exit data).
pub fn acceptance_ratio(h: &Hamiltonian, spec: &AvoidanceSpec, state: &DiscreteEnsemble, mv: Move) -> Option<f64> {
    if mv.t <= spec.t0 || mv.t >= spec.t1 {
        return None;
    }
    let idx = (mv.t - spec.t0) as usize;
    let i = mv.curve;
    let v = state.curves[i][idx];
    let new_v = v + mv.delta;

    let prev = state.curves[i][idx - 1];
    let next = state.curves[i][idx + 1];
    let (old_in, old_out) = (v - prev, next - v);
    let (new_in, new_out) = (new_v - prev, next - new_v);
    let new_log = h.log_weight(new_in) + h.log_weight(new_out);
    if new_log == f64::NEG_INFINITY {
        return None;
    }

    if spec.constraint.contains(mv.t) {
        let upper = if i == 0 { spec.top_at(mv.t) } else { state.curves[i - 1][idx] as f64 };
        let lower = if i + 1 == state.k() { spec.bottom_at(mv.t) } else { state.curves[i + 1][idx] as f64 };
        if (new_v as f64) > upper || (new_v as f64) < lower {
            return None;
        }
    }

    let old_log = h.log_weight(old_in) + h.log_weight(old_out);
    Some((new_log - old_log).exp())
}

/// One Metropolis update: the candidate is accepted iff it stays in the
/// avoiding set and its weight ratio is at least `u`. Returns the next state
/// and whether the move was accepted.
pub fn mh_step(
    h: &Hamiltonian,
    spec: &AvoidanceSpec,
    state: &DiscreteEnsemble,
    mv: Move,
    u: f64,
) -> Result<(DiscreteEnsemble, bool)> {
    if mv.curve >= state.k() {
        return Err(Error::domain(format!("curve index {} out of range", mv.curve)));
    }
    if mv.t < spec.t0 || mv.t > spec.t1 {
        return Err(Error::domain(format!("time {} outside [{}, {}]", mv.t, spec.t0, spec.t1)));
    }
    if mv.delta != 1 && mv.delta != -1 {
        return Err(Error::domain(format!("move delta {} must be +1 or -1", mv.delta)));
    }
    match acceptance_ratio(h, spec, state, mv) {
        Some(r) if r >= u => {
            let mut next = state.clone();
            next.curves[mv.curve][(mv.t - spec.t0) as usize] += mv.delta;
            Ok((next, true))
        }
        _ => Ok((state.clone(), false)),
    }
}

/// Metropolis chain on the avoiding set, initialized at the maximal
/// configuration. Proposal triplets `(curve, t, delta)` are uniform over
/// `[1,k] x [T0,T1] x {-1,+1}`; endpoint times stay in the proposal range
/// and are always rejected, which keeps the chain aperiodic.
#[derive(Debug, Clone)]
pub struct MetropolisChain {
    h: Hamiltonian,
    spec: AvoidanceSpec,
    state: DiscreteEnsemble,
    accepted: u64,
    proposed: u64,
}

impl MetropolisChain {
    pub fn new(h: &Hamiltonian, spec: &AvoidanceSpec) -> Result<Self> {
        let state = maximal_config(h, spec)?;
        Ok(MetropolisChain {
            h: h.clone(),
            spec: spec.clone(),
            state,
            accepted: 0,
            proposed: 0,
        })
    }

    pub fn state(&self) -> &DiscreteEnsemble {
        &self.state
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Draw a uniform proposal triplet and uniform variate from `rng`.
    pub fn draw_move<R: Rng + ?Sized>(&self, rng: &mut R) -> (Move, f64) {
        let k = self.state.k() as i64;
        let times = self.spec.span() + 1;
        let curve = rng.random_range(0..k) as usize;
        let t = self.spec.t0 + rng.random_range(0..times);
        let delta = if rng.random::<bool>() { 1 } else { -1 };
        (Move { curve, t, delta }, rng.random())
    }

    /// Apply one externally supplied update; used by the coupled chains.
    pub fn step_with(&mut self, mv: Move, u: f64) -> bool {
        self.proposed += 1;
        if let Some(r) = acceptance_ratio(&self.h, &self.spec, &self.state, mv) {
            if r >= u {
                self.state.curves[mv.curve][(mv.t - self.spec.t0) as usize] += mv.delta;
                self.accepted += 1;
                return true;
            }
        }
        false
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let (mv, u) = self.draw_move(rng);
        self.step_with(mv, u)
    }

    /// Accept every admissible candidate, ignoring the weight ratio. This
    /// deliberately targets the uniform law on the avoiding set instead of
    /// the conditioned bridge law; it exists so the Gibbs resampling test can
    /// calibrate its power against a known-broken sampler.
    pub fn step_skip_ratio<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let (mv, _) = self.draw_move(rng);
        self.proposed += 1;
        if acceptance_ratio(&self.h, &self.spec, &self.state, mv).is_some() {
            self.state.curves[mv.curve][(mv.t - self.spec.t0) as usize] += mv.delta;
            self.accepted += 1;
            true
        } else {
            false
        }
    }
}

/// Sampling strategy for [`sample_avoiding`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMethod {
    /// Independent exact draws by rejection; `max_tries` bounds the attempts
    /// per accepted sample.
    Rejection { max_tries: u64 },
    /// Correlated draws from the Metropolis chain: `burn_in` proposals, then
    /// one sample every `thin` proposals.
    Metropolis { burn_in: u64, thin: u64 },
}

/// Default burn-in: 50 sweeps of `k (T1 - T0)` proposals each.
pub fn default_burn_in(k: usize, span: i64) -> u64 {
    50 * k as u64 * span as u64
}

/// Default thinning: one sweep of proposals per recorded sample.
pub fn default_thin(k: usize, span: i64) -> u64 {
    (k as u64 * span as u64).max(1)
}

/// Draw `n_samples` ensembles from the avoiding law.
pub fn sample_avoiding<R: Rng + ?Sized>(
    h: &Hamiltonian,
    spec: &AvoidanceSpec,
    method: SampleMethod,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<DiscreteEnsemble>> {
    // Feasibility; also the chain's initial state.
    maximal_config(h, spec)?;
    match method {
        SampleMethod::Rejection { max_tries } => {
            let mut sampler = RejectionSampler::new(h, spec)?;
            (0..n_samples).map(|_| sampler.sample(max_tries, rng)).collect()
        }
        SampleMethod::Metropolis { burn_in, thin } => {
            let mut chain = MetropolisChain::new(h, spec)?;
            for _ in 0..burn_in {
                chain.step(rng);
            }
            let thin = thin.max(1);
            let mut out = Vec::with_capacity(n_samples);
            for _ in 0..n_samples {
                for _ in 0..thin {
                    chain.step(rng);
                }
                out.push(chain.state().clone());
            }
            Ok(out)
        }
    }
}

/// Rejection sampler over independent bridges with per-draw try budget.
pub struct RejectionSampler {
    spec: AvoidanceSpec,
    samplers: Vec<BridgeSampler>,
    tries: u64,
    hits: u64,
}

impl RejectionSampler {
    pub fn new(h: &Hamiltonian, spec: &AvoidanceSpec) -> Result<Self> {
        spec.validate(h)?;
        let samplers = (0..spec.k())
            .map(|i| BridgeSampler::new(h, spec.bridge_spec(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(RejectionSampler { spec: spec.clone(), samplers, tries: 0, hits: 0 })
    }

    /// Running acceptance estimate over the sampler's lifetime.
    pub fn running_rate(&self) -> f64 {
        if self.tries == 0 {
            0.0
        } else {
            self.hits as f64 / self.tries as f64
        }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, max_tries: u64, rng: &mut R) -> Result<DiscreteEnsemble> {
        for _ in 0..max_tries {
            self.tries += 1;
            let ensemble = DiscreteEnsemble {
                t0: self.spec.t0,
                curves: self.samplers.iter().map(|s| s.sample(rng).values).collect(),
            };
            if self.spec.is_avoiding(&ensemble) {
                self.hits += 1;
                return Ok(ensemble);
            }
        }
        Err(Error::AcceptanceTooSmall { z_hat: self.running_rate(), hits: self.hits, tries: self.tries })
    }
}

/// Monte Carlo estimate of the acceptance probability `Z`: the fraction of
/// independent free bridge tuples satisfying the avoidance event.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptanceEstimate {
    pub z_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
    pub hits: u64,
    /// Set when no tuple satisfied the event.
    pub zero_hits: bool,
}

pub fn estimate_acceptance<R: Rng + ?Sized>(
    h: &Hamiltonian,
    spec: &AvoidanceSpec,
    n_samples: u64,
    level: f64,
    rng: &mut R,
) -> Result<AcceptanceEstimate> {
    if n_samples == 0 {
        return Err(Error::domain("n_samples must be at least 1"));
    }
    spec.validate(h)?;
    let samplers = (0..spec.k())
        .map(|i| BridgeSampler::new(h, spec.bridge_spec(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut hits = 0u64;
    for _ in 0..n_samples {
        let ensemble = DiscreteEnsemble {
            t0: spec.t0,
            curves: samplers.iter().map(|s| s.sample(rng).values).collect(),
        };
        if spec.is_avoiding(&ensemble) {
            hits += 1;
        }
    }
    let (ci_low, ci_high) = crate::stattest::binomial_ci(hits, n_samples, level)?;
    Ok(AcceptanceEstimate {
        z_hat: hits as f64 / n_samples as f64,
        ci_low,
        ci_high,
        n: n_samples,
        hits,
        zero_hits: hits == 0,
    })
}

/// Exact acceptance probability by brute-force enumeration of all admissible
/// path tuples. `cap` bounds the product of per-curve path counts.
pub fn exact_acceptance(h: &Hamiltonian, spec: &AvoidanceSpec, cap: u64) -> Result<f64> {
    let states = enumerate_free_tuples(h, spec, cap)?;
    Ok(states.into_iter().filter(|(e, _)| spec.is_avoiding(e)).map(|(_, p)| p).sum())
}

/// Enumerate the avoiding set with exact conditional probabilities.
/// Oracle for chi-square and detailed-balance checks on small fixtures.
pub fn enumerate_avoiding(
    h: &Hamiltonian,
    spec: &AvoidanceSpec,
    cap: u64,
) -> Result<Vec<(DiscreteEnsemble, f64)>> {
    let states = enumerate_free_tuples(h, spec, cap)?;
    let mut avoiding: Vec<(DiscreteEnsemble, f64)> =
        states.into_iter().filter(|(e, _)| spec.is_avoiding(e)).collect();
    let z: f64 = avoiding.iter().map(|(_, p)| p).sum();
    if z == 0.0 {
        return Err(Error::infeasible("avoiding set is empty"));
    }
    for (_, p) in &mut avoiding {
        *p /= z;
    }
    Ok(avoiding)
}

/// All free path tuples with their product probabilities.
fn enumerate_free_tuples(
    h: &Hamiltonian,
    spec: &AvoidanceSpec,
    cap: u64,
) -> Result<Vec<(DiscreteEnsemble, f64)>> {
    spec.validate(h)?;
    let per_curve: Vec<Vec<(DiscretePath, f64)>> = (0..spec.k())
        .map(|i| {
            let bs = spec.bridge_spec(i);
            let paths = crate::bridge::enumerate_paths(h, bs, cap as usize)?;
            let logz = crate::bridge::log_partition(h, bs.steps(), bs.displacement())?;
            Ok(paths.into_iter().map(|(p, lw)| (p, (lw - logz).exp())).collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total: u64 = 1;
    for c in &per_curve {
        total = total.saturating_mul(c.len() as u64);
        if total > cap {
            return Err(Error::TooLarge(format!("tuple enumeration exceeds cap {cap}")));
        }
    }

    let mut out = Vec::with_capacity(total as usize);
    let mut choice = vec![0usize; spec.k()];
    loop {
        let mut curves = Vec::with_capacity(spec.k());
        let mut prob = 1.0;
        for (i, c) in choice.iter().enumerate() {
            let (path, p) = &per_curve[i][*c];
            curves.push(path.values.clone());
            prob *= p;
        }
        out.push((DiscreteEnsemble { t0: spec.t0, curves }, prob));

        let mut i = spec.k();
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < per_curve[i].len() {
                break;
            }
            choice[i] = 0;
        }
    }
}

/// Outcome of a pair of coupled Metropolis chains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingReport {
    pub steps: u64,
    /// Steps after which the pointwise ordering `low <= high` failed.
    pub violations: u64,
    pub first_violation: Option<u64>,
    pub low_final: DiscreteEnsemble,
    pub high_final: DiscreteEnsemble,
}

impl CouplingReport {
    pub fn ordered_throughout(&self) -> bool {
        self.violations == 0
    }
}

/// Run two Metropolis chains from their maximal configurations, driven by
/// the same `(curve, t, delta, u)` stream, and check the pointwise ordering
/// of their states after every step.
///
/// Requires comparable data (`low` componentwise below `high`), matching
/// intervals and constraint sets, no top barriers, and a convex Hamiltonian.
pub fn coupled_sample<R: Rng + ?Sized>(
    h: &Hamiltonian,
    low: &AvoidanceSpec,
    high: &AvoidanceSpec,
    n_steps: u64,
    rng: &mut R,
) -> Result<CouplingReport> {
    if low.t0 != high.t0 || low.t1 != high.t1 || low.k() != high.k() {
        return Err(Error::domain("coupled specs must share interval and curve count"));
    }
    if low.constraint != high.constraint {
        return Err(Error::domain("coupled specs must share the constraint set"));
    }
    if low.top.is_some() || high.top.is_some() {
        return Err(Error::domain("coupling is defined for ensembles without a top barrier"));
    }
    for i in 0..low.k() {
        if low.entry[i] > high.entry[i] || low.exit[i] > high.exit[i] {
            return Err(Error::domain(format!(
                "data not comparable at curve {}: need x_i <= x'_i and y_i <= y'_i",
                i + 1
            )));
        }
    }
    for t in low.constraint_times() {
        if low.bottom_at(t) > high.bottom_at(t) {
            return Err(Error::domain(format!("bottom barriers not ordered at t = {t}")));
        }
    }
    let report = validate(h);
    if !report.convex {
        return Err(Error::domain(format!(
            "Hamiltonian violates convexity at k = {:?}; monotone coupling needs a convex H",
            report.first_violation
        )));
    }

    let mut low_chain = MetropolisChain::new(h, low)?;
    let mut high_chain = MetropolisChain::new(h, high)?;

    let mut violations = 0u64;
    let mut first_violation = None;
    for step in 0..n_steps {
        let (mv, u) = low_chain.draw_move(rng);
        low_chain.step_with(mv, u);
        high_chain.step_with(mv, u);
        if !low_chain.state().dominated_by(high_chain.state()) {
            violations += 1;
            if first_violation.is_none() {
                first_violation = Some(step);
            }
        }
    }

    Ok(CouplingReport {
        steps: n_steps,
        violations,
        first_violation,
        low_final: low_chain.state().clone(),
        high_final: high_chain.state().clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RunRng;
    use rand::SeedableRng;
    use std::collections::HashMap;

    fn bern() -> Hamiltonian {
        Hamiltonian::bernoulli(0.5).unwrap()
    }

    fn tri() -> Hamiltonian {
        Hamiltonian::from_weights(0, vec![0.25, 0.5, 0.25]).unwrap()
    }

    /// The canonical k=2 fixture: 4 bridge pairs, 3 avoiding, Z = 3/4.
    fn k2_fixture() -> AvoidanceSpec {
        AvoidanceSpec::new(0, 2, vec![0, 0], vec![1, 1])
    }

    #[test]
    fn maximal_config_matches_closed_form() {
        // k=1, x=0, y=2, beta=1 over [0,4]: min(x + t, y) = (0,1,2,2,2).
        let spec = AvoidanceSpec::new(0, 4, vec![0], vec![2]);
        let config = maximal_config(&bern(), &spec).unwrap();
        assert_eq!(config.curves[0], vec![0, 1, 2, 2, 2]);
    }

    #[test]
    fn maximal_config_orders_curves() {
        let spec = AvoidanceSpec::new(0, 3, vec![1, 0], vec![1, 0]);
        let config = maximal_config(&bern(), &spec).unwrap();
        for idx in 0..4 {
            assert!(config.curves[0][idx] >= config.curves[1][idx]);
        }
    }

    #[test]
    fn maximal_config_detects_infeasible_bottom() {
        let spec = AvoidanceSpec::new(0, 4, vec![0], vec![2]).with_bottom(vec![0, 2, 3, 3, 2]);
        match maximal_config(&bern(), &spec) {
            Err(Error::Infeasible(_)) => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn maximal_config_respects_negative_alpha() {
        // Support {-1, 0, 1}: the closed-form cap at y alone would not be
        // maximal; the backward sweep allows overshoot above y.
        let h = Hamiltonian::from_weights(-1, vec![0.25, 0.5, 0.25]).unwrap();
        let spec = AvoidanceSpec::new(0, 4, vec![0], vec![0]);
        let config = maximal_config(&h, &spec).unwrap();
        assert_eq!(config.curves[0], vec![0, 1, 2, 1, 0]);
        // It dominates everything the enumerator produces.
        for (e, _) in enumerate_avoiding(&h, &spec, 100_000).unwrap() {
            assert!(e.dominated_by(&config));
        }
    }

    #[test]
    fn maximal_config_dominates_enumeration() {
        let fixtures = vec![
            (bern(), k2_fixture()),
            (bern(), AvoidanceSpec::new(0, 4, vec![1, 0], vec![3, 2])),
            (tri(), AvoidanceSpec::new(0, 3, vec![2, 0], vec![4, 2])),
            (
                bern(),
                AvoidanceSpec::new(0, 4, vec![2, 0], vec![3, 1]).with_top(vec![2, 3, 3, 3, 3]),
            ),
        ];
        for (h, spec) in fixtures {
            let config = maximal_config(&h, &spec).unwrap();
            assert!(spec.is_avoiding(&config));
            for (e, _) in enumerate_avoiding(&h, &spec, 1_000_000).unwrap() {
                assert!(e.dominated_by(&config), "not dominated for {spec:?}");
            }
        }
    }

    #[test]
    fn exact_acceptance_k2_is_three_quarters() {
        let z = exact_acceptance(&bern(), &k2_fixture(), 1_000).unwrap();
        assert!((z - 0.75).abs() < 1e-12, "z = {z}");
    }

    #[test]
    fn exact_acceptance_degenerate_cases() {
        // A single admissible avoiding tuple.
        let spec = AvoidanceSpec::new(0, 2, vec![0, 0], vec![2, 2]);
        let z = exact_acceptance(&bern(), &spec, 1_000).unwrap();
        assert_eq!(z, 1.0);
        // Deterministic violation: bottom barrier above the only path.
        let spec = AvoidanceSpec::new(0, 2, vec![0], vec![2]).with_bottom(vec![0, 2, 2]);
        let z = exact_acceptance(&bern(), &spec, 1_000).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn exact_acceptance_respects_cap() {
        let spec = AvoidanceSpec::new(0, 8, vec![4, 4], vec![8, 8]);
        assert!(matches!(exact_acceptance(&bern(), &spec, 10), Err(Error::TooLarge(_))));
    }

    #[test]
    fn estimate_acceptance_matches_exact() {
        let mut rng = RunRng::seed_from_u64(11);
        let est = estimate_acceptance(&bern(), &k2_fixture(), 100_000, 0.95, &mut rng).unwrap();
        let se = (0.75 * 0.25 / 100_000.0f64).sqrt();
        assert!((est.z_hat - 0.75).abs() < 3.0 * se, "z_hat = {}", est.z_hat);
        assert!(est.ci_low < 0.75 && 0.75 < est.ci_high);
        assert!(!est.zero_hits);
    }

    #[test]
    fn estimate_acceptance_k1_is_one() {
        let spec = AvoidanceSpec::new(0, 4, vec![0], vec![2]);
        let mut rng = RunRng::seed_from_u64(12);
        let est = estimate_acceptance(&bern(), &spec, 1_000, 0.95, &mut rng).unwrap();
        assert_eq!(est.z_hat, 1.0);
    }

    #[test]
    fn estimate_acceptance_zero_hit_flag() {
        // Bottom barrier unreachable: acceptance 0 with the zero-hit flag.
        let spec = AvoidanceSpec::new(0, 2, vec![0], vec![2]).with_bottom(vec![0, 2, 2]);
        let mut rng = RunRng::seed_from_u64(13);
        let est = estimate_acceptance(&bern(), &spec, 2_000, 0.95, &mut rng).unwrap();
        assert_eq!(est.z_hat, 0.0);
        assert!(est.zero_hits);
        assert_eq!(est.ci_low, 0.0);
    }

    #[test]
    fn mh_ratio_is_one_for_equal_weights() {
        let spec = k2_fixture();
        let state = maximal_config(&bern(), &spec).unwrap();
        // Admissible downward move of the top curve at the interior time.
        let mv = Move { curve: 0, t: 1, delta: -1 };
        let r = acceptance_ratio(&bern(), &spec, &state, mv).unwrap();
        assert_eq!(r, 1.0);
        let (_, accepted) = mh_step(&bern(), &spec, &state, mv, 1.0).unwrap();
        assert!(accepted, "ratio 1 must accept for every u <= 1");
    }

    #[test]
    fn mh_rejects_crossing_candidate() {
        let spec = k2_fixture();
        // State: top curve (0,0,1), bottom (0,0,1). Moving the bottom up at
        // t=1 crosses the top.
        let state = DiscreteEnsemble { t0: 0, curves: vec![vec![0, 0, 1], vec![0, 0, 1]] };
        let mv = Move { curve: 1, t: 1, delta: 1 };
        assert!(acceptance_ratio(&bern(), &spec, &state, mv).is_none());
        let (next, accepted) = mh_step(&bern(), &spec, &state, mv, 0.0).unwrap();
        assert!(!accepted);
        assert_eq!(next, state);
    }

    #[test]
    fn mh_weight_ratio_two_increments() {
        // weights (0.25,0.5,0.25): local increments (0,2) -> (1,1) gives
        // R = 0.5^2 / (0.25 * 0.25) = 4.
        let h = tri();
        let spec = AvoidanceSpec::new(0, 2, vec![0], vec![2]);
        let state = DiscreteEnsemble { t0: 0, curves: vec![vec![0, 0, 2]] };
        let r = acceptance_ratio(&h, &spec, &state, Move { curve: 0, t: 1, delta: 1 }).unwrap();
        assert!((r - 4.0).abs() < 1e-12, "r = {r}");
    }

    #[test]
    fn mh_endpoint_moves_always_rejected() {
        let spec = k2_fixture();
        let state = maximal_config(&bern(), &spec).unwrap();
        for t in [0, 2] {
            for delta in [-1, 1] {
                let (next, accepted) =
                    mh_step(&bern(), &spec, &state, Move { curve: 0, t, delta }, 0.0).unwrap();
                assert!(!accepted);
                assert_eq!(next, state);
            }
        }
    }

    #[test]
    fn rejection_matches_enumeration_on_k2() {
        let spec = k2_fixture();
        let states = enumerate_avoiding(&bern(), &spec, 1_000).unwrap();
        assert_eq!(states.len(), 3);
        let index: HashMap<Vec<Vec<i64>>, usize> =
            states.iter().enumerate().map(|(i, (e, _))| (e.curves.clone(), i)).collect();
        let mut rng = RunRng::seed_from_u64(21);
        let samples =
            sample_avoiding(&bern(), &spec, SampleMethod::Rejection { max_tries: 1_000 }, 100_000, &mut rng)
                .unwrap();
        let mut counts = vec![0u64; states.len()];
        for s in &samples {
            counts[index[&s.curves]] += 1;
        }
        let probs: Vec<f64> = states.iter().map(|(_, p)| *p).collect();
        let report = crate::stattest::chi_square_gof(&counts, &probs).unwrap();
        assert!(report.p_value > 0.001, "chi2 p = {}", report.p_value);
    }

    #[test]
    fn metropolis_matches_enumeration_on_k2() {
        let spec = k2_fixture();
        let states = enumerate_avoiding(&bern(), &spec, 1_000).unwrap();
        let index: HashMap<Vec<Vec<i64>>, usize> =
            states.iter().enumerate().map(|(i, (e, _))| (e.curves.clone(), i)).collect();
        let mut rng = RunRng::seed_from_u64(22);
        let method = SampleMethod::Metropolis { burn_in: 1_000, thin: 96 };
        let samples = sample_avoiding(&bern(), &spec, method, 100_000, &mut rng).unwrap();
        let mut counts = vec![0u64; states.len()];
        for s in &samples {
            counts[index[&s.curves]] += 1;
        }
        let probs: Vec<f64> = states.iter().map(|(_, p)| *p).collect();
        let report = crate::stattest::chi_square_gof(&counts, &probs).unwrap();
        assert!(report.p_value > 0.001, "chi2 p = {}", report.p_value);
    }

    #[test]
    fn k1_avoiding_equals_plain_bridge() {
        // No barriers, one curve: the avoidance event is vacuous, so the
        // sampler must reproduce the bridge law.
        let h = tri();
        let spec = AvoidanceSpec::new(0, 4, vec![1], vec![3]);
        let bridge_paths =
            crate::bridge::enumerate_paths(&h, BridgeSpec::new(0, 4, 1, 3), 10_000).unwrap();
        let avoiding = enumerate_avoiding(&h, &spec, 10_000).unwrap();
        assert_eq!(bridge_paths.len(), avoiding.len());
        for (e, p) in &avoiding {
            let lw =
                crate::bridge::path_log_weight(&h, BridgeSpec::new(0, 4, 1, 3), &e.curve_path(0)).unwrap();
            assert!((p - lw.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn detailed_balance_on_enumerated_fixture() {
        // P(w) P(w -> t) = P(t) P(t -> w) for every neighboring pair, where
        // the transition probability is (uniform proposal) x (accept prob).
        let fixtures = vec![
            (bern(), k2_fixture()),
            (tri(), AvoidanceSpec::new(0, 3, vec![2, 0], vec![4, 2])),
        ];
        for (h, spec) in fixtures {
            let states = enumerate_avoiding(&h, &spec, 100_000).unwrap();
            let proposals = 2.0 * spec.k() as f64 * (spec.span() + 1) as f64;
            for (a, pa) in &states {
                for (b, pb) in &states {
                    if let Some(mv) = single_site_difference(a, b) {
                        let r_ab = acceptance_ratio(&h, &spec, a, mv);
                        let fwd = r_ab.map_or(0.0, |r| r.min(1.0)) / proposals;
                        let back_mv = Move { delta: -mv.delta, ..mv };
                        let r_ba = acceptance_ratio(&h, &spec, b, back_mv);
                        let bwd = r_ba.map_or(0.0, |r| r.min(1.0)) / proposals;
                        assert!(
                            (pa * fwd - pb * bwd).abs() < 1e-9,
                            "detailed balance broken: {:.3e} vs {:.3e}",
                            pa * fwd,
                            pb * bwd
                        );
                    }
                }
            }
        }
    }

    fn single_site_difference(a: &DiscreteEnsemble, b: &DiscreteEnsemble) -> Option<Move> {
        let mut found: Option<Move> = None;
        for i in 0..a.k() {
            for (idx, (va, vb)) in a.curves[i].iter().zip(&b.curves[i]).enumerate() {
                if va != vb {
                    if found.is_some() || (vb - va).abs() != 1 {
                        return None;
                    }
                    found = Some(Move { curve: i, t: a.t0 + idx as i64, delta: vb - va });
                }
            }
        }
        found
    }

    #[test]
    fn coupled_identical_specs_stay_identical() {
        let spec = AvoidanceSpec::new(0, 4, vec![1, 0], vec![3, 2]);
        let mut rng = RunRng::seed_from_u64(31);
        let report = coupled_sample(&bern(), &spec, &spec, 2_000, &mut rng).unwrap();
        assert_eq!(report.violations, 0);
        assert_eq!(report.low_final, report.high_final);
    }

    #[test]
    fn coupled_ordering_holds() {
        let low = AvoidanceSpec::new(0, 4, vec![0, 0], vec![1, 1]);
        let high = AvoidanceSpec::new(0, 4, vec![1, 0], vec![2, 1]);
        let mut rng = RunRng::seed_from_u64(32);
        let report = coupled_sample(&bern(), &low, &high, 10_000, &mut rng).unwrap();
        assert!(report.ordered_throughout(), "violations: {}", report.violations);
    }

    #[test]
    fn coupled_rejects_non_comparable_data() {
        let low = AvoidanceSpec::new(0, 4, vec![2, 0], vec![1, 1]);
        let high = AvoidanceSpec::new(0, 4, vec![1, 0], vec![2, 1]);
        let mut rng = RunRng::seed_from_u64(33);
        assert!(matches!(coupled_sample(&bern(), &low, &high, 10, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn coupled_rejects_nonconvex_hamiltonian() {
        let h = Hamiltonian::from_weights(0, vec![0.5, 0.25, 0.25]).unwrap();
        let spec = AvoidanceSpec::new(0, 4, vec![0], vec![2]);
        let mut rng = RunRng::seed_from_u64(34);
        let err = coupled_sample(&h, &spec, &spec, 10, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
        assert!(err.to_string().contains("convex"));
    }

    #[test]
    fn infeasible_spec_errors_out() {
        let spec = AvoidanceSpec::new(0, 2, vec![0], vec![2]).with_bottom(vec![0, 2, 2]);
        let mut rng = RunRng::seed_from_u64(35);
        let err = sample_avoiding(&bern(), &spec, SampleMethod::Rejection { max_tries: 10 }, 1, &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn rejection_exhaustion_reports_running_estimate() {
        // Feasible but needle-thin: bottom barrier pins the unique path.
        let spec = AvoidanceSpec::new(0, 8, vec![4, 0], vec![8, 4])
            .with_bottom(vec![0, 1, 2, 3, 4, 4, 4, 4, 4]);
        let mut rng = RunRng::seed_from_u64(36);
        match sample_avoiding(&bern(), &spec, SampleMethod::Rejection { max_tries: 2 }, 1, &mut rng) {
            Err(Error::AcceptanceTooSmall { tries, .. }) => assert_eq!(tries, 2),
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn constraint_subset_only_checks_listed_times() {
        // Crossing at t=1 is allowed when S = {0, 2}.
        let spec = AvoidanceSpec::new(0, 2, vec![0, 0], vec![1, 1]).with_constraint([0, 2]);
        let crossing = DiscreteEnsemble { t0: 0, curves: vec![vec![0, 0, 1], vec![0, 1, 1]] };
        assert!(spec.is_avoiding(&crossing));
        let z = exact_acceptance(&bern(), &spec, 1_000).unwrap();
        assert_eq!(z, 1.0);
    }
}
