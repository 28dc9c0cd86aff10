//! Random-walk jump Hamiltonians: minus-log jump weights on an integer
//! support interval `[alpha, beta]`, with validation and exponential tilting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalization tolerance for constructed weight vectors.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Convergence target for the tilt solver.
pub const TILT_TOL: f64 = 1e-10;
/// Bisection bracket for the tilt parameter.
const THETA_RANGE: f64 = 50.0;
/// Iteration cap for the tilt solver.
const TILT_MAX_ITER: usize = 200;

/// Construction recipe, kept for serialization and the CLI spec grammar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HamiltonianKind {
    Bernoulli { q: f64 },
    Geometric { q: f64, trunc: i64 },
    Weights,
}

/// A jump-weight law `w(k) = exp(-H(k))` supported on `[alpha, beta]`.
///
/// Weights are stored normalized; `w(k) > 0` on every support point and
/// `w(k) = 0` outside. Infinite-support laws (geometric) are truncated at a
/// cap and renormalized, so `beta` is always finite here.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hamiltonian {
    alpha: i64,
    weights: Vec<f64>,
    #[serde(skip)]
    log_weights: Vec<f64>,
    kind: HamiltonianKind,
    /// Set when the law was truncated from an infinite support.
    truncated: Option<i64>,
}

impl Hamiltonian {
    /// Two-point law on `{0, 1}` with `w(0) = q`, `w(1) = 1 - q`.
    pub fn bernoulli(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::domain(format!("bernoulli parameter q = {q} not in (0,1)")));
        }
        Ok(Self::assemble(0, vec![q, 1.0 - q], HamiltonianKind::Bernoulli { q }, None))
    }

    /// Geometric law `w(k) ∝ q (1-q)^k` renormalized over `[0, trunc]`.
    ///
    /// When `trunc` is `None`, the cap is chosen so the discarded tail mass
    /// is below the normalization tolerance.
    pub fn geometric(q: f64, trunc: Option<i64>) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::domain(format!("geometric parameter q = {q} not in (0,1)")));
        }
        let trunc = match trunc {
            Some(t) => {
                if t < 8 {
                    return Err(Error::domain(format!("geometric truncation {t} < 8")));
                }
                t
            }
            // Tail mass beyond k is (1-q)^(k+1); solve for < 1e-12.
            None => {
                let t = (NORMALIZATION_TOL.ln() / (1.0 - q).ln()).ceil() as i64;
                t.max(8)
            }
        };
        let weights: Vec<f64> = (0..=trunc).map(|k| q * (1.0 - q).powi(k as i32)).collect();
        Ok(Self::assemble(0, weights, HamiltonianKind::Geometric { q, trunc }, Some(trunc)))
    }

    /// Finite law from an explicit weight vector supported on
    /// `[alpha, alpha + weights.len() - 1]`. Weights are normalized.
    pub fn from_weights(alpha: i64, weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::domain("support needs at least two points (alpha < beta)"));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::domain(format!(
                "weight at k = {} is {w}; every support point needs positive probability",
                alpha + i as i64
            )));
        }
        Ok(Self::assemble(alpha, weights, HamiltonianKind::Weights, None))
    }

    /// Like [`Hamiltonian::from_weights`] but skips normalization. Intended
    /// for feeding [`validate`] with deliberately broken inputs.
    pub fn from_weights_unnormalized(alpha: i64, weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::domain("support needs at least two points (alpha < beta)"));
        }
        let log_weights = weights.iter().map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect();
        Ok(Hamiltonian { alpha, weights, log_weights, kind: HamiltonianKind::Weights, truncated: None })
    }

    fn assemble(alpha: i64, mut weights: Vec<f64>, kind: HamiltonianKind, truncated: Option<i64>) -> Self {
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Hamiltonian { alpha, weights, log_weights, kind, truncated }
    }

    /// Parse the CLI/config spec grammar:
    /// `"bernoulli:q"`, `"geometric:q:trunc"`, `"weights:w0,w1,..."`.
    pub fn parse_spec(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        match kind {
            "bernoulli" => {
                let q: f64 = parse_num(parts.next(), "bernoulli:q")?;
                Self::bernoulli(q)
            }
            "geometric" => {
                let q: f64 = parse_num(parts.next(), "geometric:q")?;
                let trunc: i64 = parse_num(parts.next(), "geometric:q:trunc")?;
                Self::geometric(q, Some(trunc))
            }
            "weights" => {
                let list = parts
                    .next()
                    .ok_or_else(|| Error::domain("weights spec needs a comma-separated list"))?;
                let weights = list
                    .split(',')
                    .map(|t| t.trim().parse::<f64>().map_err(|e| Error::domain(format!("bad weight {t:?}: {e}"))))
                    .collect::<Result<Vec<f64>>>()?;
                Self::from_weights(0, weights)
            }
            other => Err(Error::domain(format!("unknown hamiltonian kind {other:?}"))),
        }
    }

    pub fn alpha(&self) -> i64 {
        self.alpha
    }

    /// Upper end of the (possibly truncated) support.
    pub fn beta(&self) -> i64 {
        self.alpha + self.weights.len() as i64 - 1
    }

    /// True when the law was truncated from an infinite support.
    pub fn is_truncated(&self) -> bool {
        self.truncated.is_some()
    }

    pub fn kind(&self) -> &HamiltonianKind {
        &self.kind
    }

    pub fn support_len(&self) -> usize {
        self.weights.len()
    }

    /// Normalized weights indexed by `k - alpha`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `w(k)`, zero outside the support.
    pub fn weight(&self, k: i64) -> f64 {
        let i = k - self.alpha;
        if i < 0 || i as usize >= self.weights.len() {
            0.0
        } else {
            self.weights[i as usize]
        }
    }

    /// `log w(k)`, `-inf` outside the support.
    pub fn log_weight(&self, k: i64) -> f64 {
        let i = k - self.alpha;
        if i < 0 || i as usize >= self.weights.len() {
            f64::NEG_INFINITY
        } else {
            self.log_weights[i as usize]
        }
    }

    /// Support points paired with weights.
    pub fn support(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.weights.iter().enumerate().map(move |(i, w)| (self.alpha + i as i64, *w))
    }

    pub fn mean(&self) -> f64 {
        self.support().map(|(k, w)| k as f64 * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.support().map(|(k, w)| (k as f64 - m).powi(2) * w).sum()
    }

    /// Rebuild the log-weight cache (needed after serde deserialization,
    /// which skips the cached field).
    pub fn rebuild_cache(&mut self) {
        self.log_weights = self
            .weights
            .iter()
            .map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
            .collect();
    }
}

fn parse_num<T: std::str::FromStr>(part: Option<&str>, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = part.ok_or_else(|| Error::domain(format!("missing field in {what}")))?;
    raw.trim().parse::<T>().map_err(|e| Error::domain(format!("bad value {raw:?} in {what}: {e}")))
}

/// Report produced by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub normalized: bool,
    pub convex: bool,
    pub support_contiguous: bool,
    /// First support point where discrete convexity of `-log w` fails.
    pub first_violation: Option<i64>,
}

/// Check normalization, discrete convexity of `H = -log w` (first differences
/// nondecreasing), and support contiguity (no interior zero weight).
pub fn validate(h: &Hamiltonian) -> ValidationReport {
    let total: f64 = h.weights().iter().sum();
    let normalized = (total - 1.0).abs() <= NORMALIZATION_TOL;

    let support_contiguous = h.weights().iter().all(|w| *w > 0.0);

    let hs: Vec<f64> = h.weights().iter().map(|w| if *w > 0.0 { -w.ln() } else { f64::INFINITY }).collect();
    let mut convex = true;
    let mut first_violation = None;
    // Slack absorbs rounding in the log; violations of interest are O(1).
    const SLACK: f64 = 1e-9;
    for i in 1..hs.len().saturating_sub(1) {
        let left = hs[i] - hs[i - 1];
        let right = hs[i + 1] - hs[i];
        if right + SLACK < left {
            convex = false;
            first_violation = Some(h.alpha() + i as i64);
            break;
        }
    }

    ValidationReport { normalized, convex, support_contiguous, first_violation }
}

/// Exponential tilt of a Hamiltonian pinned to a target mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TiltedLaw {
    pub theta: f64,
    pub p: f64,
    /// Variance of the tilted jump law (the `sigma_p^2` convention).
    pub sigma2: f64,
    /// Tilted weights on the same support as the source Hamiltonian.
    pub tilted_weights: Vec<f64>,
}

/// Solve `theta` so the tilted law `w(k) e^{theta k} / Z` has mean `p`, by
/// bisection over `[-50, 50]`. Requires `alpha < p < beta` strictly.
pub fn tilt_to_mean(h: &Hamiltonian, p: f64) -> Result<TiltedLaw> {
    if !(p > h.alpha() as f64 && p < h.beta() as f64) {
        return Err(Error::domain(format!(
            "target mean {p} outside open support interval ({}, {})",
            h.alpha(),
            h.beta()
        )));
    }

    let mean_at = |theta: f64| tilted_moments(h, theta).0;

    let (mut lo, mut hi) = (-THETA_RANGE, THETA_RANGE);
    if mean_at(lo) > p || mean_at(hi) < p {
        return Err(Error::Numeric(format!("tilt bracket [-{THETA_RANGE}, {THETA_RANGE}] does not contain mean {p}")));
    }
    let mut theta = 0.0;
    let mut converged = false;
    for _ in 0..TILT_MAX_ITER {
        theta = 0.5 * (lo + hi);
        let m = mean_at(theta);
        if (m - p).abs() <= TILT_TOL {
            converged = true;
            break;
        }
        if m < p {
            lo = theta;
        } else {
            hi = theta;
        }
    }
    if !converged {
        let m = mean_at(theta);
        if (m - p).abs() > TILT_TOL {
            return Err(Error::Numeric(format!(
                "tilt solver stalled after {TILT_MAX_ITER} iterations: |mean - p| = {:.3e}",
                (m - p).abs()
            )));
        }
    }

    let (mean, var, tilted_weights) = tilted_moments_full(h, theta);
    debug_assert!((mean - p).abs() <= 10.0 * TILT_TOL);
    Ok(TiltedLaw { theta, p, sigma2: var, tilted_weights })
}

/// Convenience: `sigma_p` (standard deviation of the tilt at mean `p`).
pub fn sigma_p(h: &Hamiltonian, p: f64) -> Result<f64> {
    Ok(tilt_to_mean(h, p)?.sigma2.sqrt())
}

fn tilted_moments(h: &Hamiltonian, theta: f64) -> (f64, f64) {
    let (mean, var, _) = tilted_moments_full(h, theta);
    (mean, var)
}

fn tilted_moments_full(h: &Hamiltonian, theta: f64) -> (f64, f64, Vec<f64>) {
    // Shift exponents by the max to keep the normalizer in range for large theta.
    let shift = h
        .support()
        .map(|(k, w)| w.ln() + theta * k as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut tilted: Vec<f64> = h
        .support()
        .map(|(k, w)| (w.ln() + theta * k as f64 - shift).exp())
        .collect();
    let z: f64 = tilted.iter().sum();
    for w in &mut tilted {
        *w /= z;
    }
    let mean: f64 = tilted.iter().enumerate().map(|(i, w)| (h.alpha() + i as i64) as f64 * w).sum();
    let var: f64 = tilted
        .iter()
        .enumerate()
        .map(|(i, w)| ((h.alpha() + i as i64) as f64 - mean).powi(2) * w)
        .sum();
    (mean, var, tilted)
}
