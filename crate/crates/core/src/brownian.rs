//! Brownian bridge samplers, closed-form tail oracles, the two-bridge
//! decomposition, avoiding Brownian ensembles, and explicit lower-bound
//! evaluators.
//!
//! Continuous ensembles are sampled on a finite grid; the avoiding sampler
//! enforces the strict ordering at grid points only (touching between grid
//! points is a null event for the limit law, and the grid size is exposed).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::std_normal;

/// Truncation tolerance for the alternating series in the bound evaluators.
const SERIES_TOL: f64 = 1e-15;

/// Constant or absent barrier for the continuous sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousBarrier {
    Unbounded,
    Constant(f64),
}

impl ContinuousBarrier {
    fn upper_value(&self) -> f64 {
        match self {
            ContinuousBarrier::Unbounded => f64::INFINITY,
            ContinuousBarrier::Constant(c) => *c,
        }
    }

    fn lower_value(&self) -> f64 {
        match self {
            ContinuousBarrier::Unbounded => f64::NEG_INFINITY,
            ContinuousBarrier::Constant(c) => *c,
        }
    }
}

/// `k` real-valued curves sampled on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousEnsemble {
    pub grid: Vec<f64>,
    pub curves: Vec<Vec<f64>>,
}

impl ContinuousEnsemble {
    pub fn k(&self) -> usize {
        self.curves.len()
    }

    pub fn value(&self, curve: usize, grid_index: usize) -> f64 {
        self.curves[curve][grid_index]
    }
}

/// Sample a standard Brownian bridge (`B(0) = B(1) = 0`, variance 1) at the
/// given strictly increasing times in `[0, 1]` (0 and 1 excluded or included;
/// values at 0 and 1 are exactly 0). Gaussian increments of a Wiener path,
/// then the bridge transform `W_t - t W_1`.
fn standard_bridge_at<R: Rng + ?Sized>(times: &[f64], rng: &mut R) -> Vec<f64> {
    let mut w = Vec::with_capacity(times.len());
    let mut prev_t = 0.0;
    let mut acc = 0.0;
    for &t in times {
        let dt = t - prev_t;
        debug_assert!(dt >= 0.0);
        if dt > 0.0 {
            acc += std_normal(rng) * dt.sqrt();
        }
        w.push(acc);
        prev_t = t;
    }
    // Wiener value at time 1 closes the bridge.
    let w1 = if prev_t < 1.0 { acc + std_normal(rng) * (1.0 - prev_t).sqrt() } else { acc };
    times.iter().zip(&w).map(|(t, wt)| wt - t * w1).collect()
}

/// Exact finite-dimensional draw of a Brownian bridge on `[a, b]` from `x`
/// to `y` with variance `sigma2`, on a uniform grid of `m + 1` points.
pub fn sample_brownian_bridge<R: Rng + ?Sized>(
    sigma2: f64,
    a: f64,
    b: f64,
    x: f64,
    y: f64,
    m: usize,
    rng: &mut R,
) -> Result<ContinuousEnsemble> {
    if !(a < b) {
        return Err(Error::domain(format!("need a < b, got [{a}, {b}]")));
    }
    if m < 2 {
        return Err(Error::domain(format!("grid size m = {m} < 2")));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::domain(format!("variance {sigma2} must be positive")));
    }
    let grid = uniform_grid(a, b, m);
    let unit_times: Vec<f64> = grid.iter().map(|t| (t - a) / (b - a)).collect();
    let tilde = standard_bridge_at(&unit_times, rng);
    let sigma = sigma2.sqrt();
    let scale = sigma * (b - a).sqrt();
    let values: Vec<f64> = grid
        .iter()
        .zip(&tilde)
        .map(|(t, bt)| {
            let u = (t - a) / (b - a);
            scale * bt + (1.0 - u) * x + u * y
        })
        .collect();
    Ok(ContinuousEnsemble { grid, curves: vec![values] })
}

fn uniform_grid(a: f64, b: f64, m: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=m).map(|j| a + (b - a) * j as f64 / m as f64).collect();
    grid[0] = a;
    grid[m] = b;
    grid
}

/// Exact tail of the running maximum of a 0-to-0 bridge (reflection
/// principle): `P(max >= C) = exp(-2 C^2 / sigma^2)`.
pub fn max_tail(sigma2: f64, c: f64) -> Result<f64> {
    if c < 0.0 {
        return Err(Error::domain(format!("threshold C = {c} must be nonnegative")));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::domain(format!("variance {sigma2} must be positive")));
    }
    Ok((-2.0 * c * c / sigma2).exp())
}

/// Tail of the maximum absolute value of a 0-to-0 bridge:
/// `2 sum_{n>=1} (-1)^{n-1} exp(-2 n^2 C^2 / sigma^2)`, truncated when the
/// next term drops below `tol` (alternating series, so the truncation error
/// is below `tol`). Returns 1 at `C = 0` by convention.
pub fn max_abs_tail(sigma2: f64, c: f64, tol: f64) -> Result<f64> {
    if c < 0.0 {
        return Err(Error::domain(format!("threshold C = {c} must be nonnegative")));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::domain(format!("variance {sigma2} must be positive")));
    }
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance {tol} must be positive")));
    }
    if c == 0.0 {
        return Ok(1.0);
    }
    let mut total = 0.0;
    let mut sign = 1.0;
    for n in 1..10_000 {
        let term = (-2.0 * (n * n) as f64 * c * c / sigma2).exp();
        total += sign * term;
        sign = -sign;
        if term < tol {
            break;
        }
    }
    Ok((2.0 * total).clamp(0.0, 1.0))
}

/// A bridge on `[0, T]` assembled from a Gaussian midpoint value and two
/// independent shorter bridges; distributed as a variance-`sigma2` bridge.
#[derive(Debug, Clone)]
pub struct ComposedBridge {
    pub ensemble: ContinuousEnsemble,
    /// The drawn midpoint value; the curve passes through `(t, xi)` exactly.
    pub xi: f64,
}

/// Glue two independent bridges at interior time `t` with a Gaussian value
/// `xi` of variance `sigma2 (t/T)(1 - t/T)`: the left piece has variance
/// `sigma2 t / T`, the right `sigma2 (T - t) / T`, and the affine ramps meet
/// at `xi`. The grid is uniform with `t` inserted when absent.
pub fn compose_two_bridges<R: Rng + ?Sized>(
    sigma2: f64,
    t_total: f64,
    t: f64,
    m: usize,
    rng: &mut R,
) -> Result<ComposedBridge> {
    if !(t > 0.0 && t < t_total) {
        return Err(Error::domain(format!("interior time {t} outside (0, {t_total})")));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::domain(format!("variance {sigma2} must be positive")));
    }
    if m < 2 {
        return Err(Error::domain(format!("grid size m = {m} < 2")));
    }
    let frac = t / t_total;
    let xi = std_normal(rng) * (sigma2 * frac * (1.0 - frac)).sqrt();

    let mut grid = uniform_grid(0.0, t_total, m);
    if !grid.iter().any(|s| *s == t) {
        grid.push(t);
        grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    }

    let left_times: Vec<f64> = grid.iter().filter(|s| **s <= t).map(|s| s / t).collect();
    let right_times: Vec<f64> =
        grid.iter().filter(|s| **s > t).map(|s| (s - t) / (t_total - t)).collect();
    let left_sigma = (sigma2 * frac).sqrt();
    let right_sigma = (sigma2 * (1.0 - frac)).sqrt();
    let left = standard_bridge_at(&left_times, rng);
    let right = standard_bridge_at(&right_times, rng);

    let mut values = Vec::with_capacity(grid.len());
    for (u, b1) in left_times.iter().zip(&left) {
        values.push(u * xi + left_sigma * b1);
    }
    for (u, b2) in right_times.iter().zip(&right) {
        values.push((1.0 - u) * xi + right_sigma * b2);
    }
    Ok(ComposedBridge { ensemble: ContinuousEnsemble { grid, curves: vec![values] }, xi })
}

/// A draw from the avoiding Brownian law together with the rejection
/// sampler's running acceptance statistics.
#[derive(Debug, Clone)]
pub struct AvoidingBrownianDraw {
    pub ensemble: ContinuousEnsemble,
    pub tries: u64,
    pub acceptance_rate: f64,
}

/// Rejection sampler for `k` independent variance-`sigma2` bridges
/// conditioned on strict ordering `f > B_1 > ... > B_k > g` at every grid
/// point. Avoidance is grid-level only; refine `m` to tighten it.
#[allow(clippy::too_many_arguments)]
pub fn sample_avoiding_brownian<R: Rng + ?Sized>(
    sigma2: f64,
    a: f64,
    b: f64,
    entry: &[f64],
    exit: &[f64],
    top: ContinuousBarrier,
    bottom: ContinuousBarrier,
    m: usize,
    max_tries: u64,
    rng: &mut R,
) -> Result<AvoidingBrownianDraw> {
    if entry.is_empty() || entry.len() != exit.len() {
        return Err(Error::domain("entry and exit data must be nonempty and of equal length"));
    }
    for v in [entry, exit] {
        if v.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::domain(format!("data {v:?} must be strictly decreasing")));
        }
    }
    let f = top.upper_value();
    let g = bottom.lower_value();
    if !(f > entry[0]) || !(f > exit[0]) {
        return Err(Error::domain("top barrier must exceed the first entry and exit values"));
    }
    let k = entry.len();
    if !(g < entry[k - 1]) || !(g < exit[k - 1]) {
        return Err(Error::domain("bottom barrier must lie below the last entry and exit values"));
    }

    let mut tries = 0u64;
    while tries < max_tries {
        tries += 1;
        let mut curves = Vec::with_capacity(k);
        let mut grid = Vec::new();
        for i in 0..k {
            let one = sample_brownian_bridge(sigma2, a, b, entry[i], exit[i], m, rng)?;
            if i == 0 {
                grid = one.grid;
            }
            curves.push(one.curves.into_iter().next().expect("one curve"));
        }
        let ok = (0..=m).all(|j| {
            let mut prev = f;
            for curve in &curves {
                if !(prev > curve[j]) {
                    return false;
                }
                prev = curve[j];
            }
            prev > g
        });
        if ok {
            return Ok(AvoidingBrownianDraw {
                ensemble: ContinuousEnsemble { grid, curves },
                tries,
                acceptance_rate: 1.0 / tries as f64,
            });
        }
    }
    Err(Error::AcceptanceTooSmall { z_hat: 0.0, hits: 0, tries })
}

/// Mode selector for [`separation_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparationMode {
    /// Alternating-series bound `(1/2 - sum (-1)^{n-1} e^{-n^2 C^2 / 8 sigma^2})^{k-1}`.
    Series,
    /// Weaker closed form `(1 - 3 e^{-C^2 / 8 sigma^2})^{k-1}`, valid for
    /// `C^2 >= 8 sigma^2 log 3`.
    Weak,
}

/// Lower bound on the probability that `k - 1` independent bridges with
/// entry/exit gaps of at least `C sqrt(T)` stay mutually ordered above a
/// deep bottom path.
pub fn separation_bound(c: f64, sigma2: f64, k: usize, mode: SeparationMode) -> Result<f64> {
    if !(c > 0.0) || !(sigma2 > 0.0) || k == 0 {
        return Err(Error::domain(format!("need C > 0, sigma2 > 0, k >= 1; got C = {c}, sigma2 = {sigma2}, k = {k}")));
    }
    let base = match mode {
        SeparationMode::Series => {
            let mut total = 0.0;
            let mut sign = 1.0;
            for n in 1..10_000 {
                let term = (-((n * n) as f64) * c * c / (8.0 * sigma2)).exp();
                total += sign * term;
                sign = -sign;
                if term < SERIES_TOL {
                    break;
                }
            }
            0.5 - total
        }
        SeparationMode::Weak => {
            if c * c < 8.0 * sigma2 * 3.0f64.ln() {
                return Err(Error::domain(format!(
                    "weak mode requires C^2 >= 8 sigma^2 log 3 ({} >= {})",
                    c * c,
                    8.0 * sigma2 * 3.0f64.ln()
                )));
            }
            1.0 - 3.0 * (-c * c / (8.0 * sigma2)).exp()
        }
    };
    Ok(base.powi(k as i32 - 1))
}

/// Lower bound on the probability that the bottom curve of a `k`-curve
/// avoiding ensemble rises `M sqrt(T)` above the slope line at midtime,
/// given data no lower than `-M1 sqrt(T)`:
/// `(2^{3k/2} / (pi^{k/2} sigma^k)) (1 - 2 sum (-1)^{n-1} e^{-2 n^2 / sigma^2})^{2k}
///  exp(-2 k (M + M1 + 10 k - 4)^2 / sigma^2)`.
pub fn high_curves_bound(k: usize, sigma: f64, m_rise: f64, m1: f64) -> Result<f64> {
    if k == 0 || !(sigma > 0.0) || !(m_rise > 0.0) || !(m1 > 0.0) {
        return Err(Error::domain(format!(
            "need k >= 1, sigma > 0, M > 0, M1 > 0; got k = {k}, sigma = {sigma}, M = {m_rise}, M1 = {m1}"
        )));
    }
    let kf = k as f64;
    let prefactor = 2.0f64.powf(1.5 * kf) / (std::f64::consts::PI.powf(kf / 2.0) * sigma.powf(kf));
    let mut series = 0.0;
    let mut sign = 1.0;
    for n in 1..10_000 {
        let term = (-2.0 * ((n * n) as f64) / (sigma * sigma)).exp();
        series += sign * term;
        sign = -sign;
        if term < SERIES_TOL {
            break;
        }
    }
    let middle = (1.0 - 2.0 * series).powi(2 * k as i32);
    let offset = m_rise + m1 + 10.0 * kf - 4.0;
    let tail = (-2.0 * kf * offset * offset / (sigma * sigma)).exp();
    Ok(prefactor * middle * tail)
}
