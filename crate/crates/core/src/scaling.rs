//! Diffusive embedding of discrete ensembles and the derived diagnostics:
//! parabola-violation frequencies, extreme-tail and minimum-gap estimators,
//! and the modulus of continuity of rescaled curves.

use serde::{Deserialize, Serialize};

use crate::avoid::DiscreteEnsemble;
use crate::error::{Error, Result};
use crate::stattest::binomial_ci;

/// Parameters of the scaling map
/// `f_i(x) = N^{-gamma/2} (L_i(x N^gamma) - p x N^gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    /// Transversal exponent (> 0).
    pub gamma: f64,
    /// Global slope removed by the affine shift.
    pub p: f64,
    /// Parabolic curvature used by the diagnostic.
    pub lambda: f64,
    /// Sub-parabolic slack exponent in [0, 2).
    pub theta: f64,
    /// Ensemble index N.
    pub n: u64,
    /// Horizon psi(N): curves are constant beyond +-psi.
    pub psi: f64,
}

impl ScalingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::domain(format!("gamma = {} must be positive", self.gamma)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::domain(format!("lambda = {} must be positive", self.lambda)));
        }
        if !(0.0..2.0).contains(&self.theta) {
            return Err(Error::domain(format!("theta = {} must lie in [0, 2)", self.theta)));
        }
        if self.n == 0 {
            return Err(Error::domain("ensemble index N must be positive"));
        }
        if !(self.psi > 0.0) {
            return Err(Error::domain(format!("psi = {} must be positive", self.psi)));
        }
        Ok(())
    }

    /// `N^gamma` (horizontal scale).
    pub fn n_gamma(&self) -> f64 {
        (self.n as f64).powf(self.gamma)
    }

    /// `N^{gamma/2}` (vertical scale).
    pub fn n_gamma_half(&self) -> f64 {
        (self.n as f64).powf(self.gamma / 2.0)
    }

    /// `|n|^theta` with the `0^0 = 1` convention.
    pub fn slack(&self, n_idx: i64) -> f64 {
        if self.theta == 0.0 {
            1.0
        } else {
            (n_idx.abs() as f64).powf(self.theta)
        }
    }
}

/// `floor(n_idx * N^gamma)` with floor toward negative infinity, computed in
/// integer arithmetic when `gamma` is an integer or half-integer (the lattice
/// times of the diagnostics must not drift across float boundaries). Other
/// exponents fall back to a float floor.
pub fn floor_lattice(n_idx: i64, params: &ScalingParams) -> i64 {
    let n = params.n as i128;
    let gamma = params.gamma;
    if gamma == gamma.round() && gamma <= 40.0 {
        let mut pow: i128 = 1;
        let mut overflow = false;
        for _ in 0..gamma as u32 {
            pow = match pow.checked_mul(n) {
                Some(v) => v,
                None => {
                    overflow = true;
                    break;
                }
            };
        }
        if !overflow {
            if let Some(v) = pow.checked_mul(n_idx as i128) {
                if let Ok(v) = i64::try_from(v) {
                    return v;
                }
            }
        }
    } else if (2.0 * gamma) == (2.0 * gamma).round() && 2.0 * gamma <= 80.0 {
        // N^{m/2} with odd m: floor(|n| N^{m/2}) = isqrt(n^2 N^m).
        let m = (2.0 * gamma) as u32;
        let mut pow: i128 = 1;
        let mut overflow = false;
        for _ in 0..m {
            pow = match pow.checked_mul(n) {
                Some(v) => v,
                None => {
                    overflow = true;
                    break;
                }
            };
        }
        if !overflow {
            let sq = (n_idx as i128).checked_mul(n_idx as i128).and_then(|s| s.checked_mul(pow));
            if let Some(sq) = sq {
                let root = isqrt(sq as u128);
                let out = if n_idx >= 0 {
                    root as i128
                } else {
                    // floor of a negative value is -ceil of its magnitude
                    let r = root as i128;
                    if r * r == sq {
                        -r
                    } else {
                        -(r + 1)
                    }
                };
                if let Ok(v) = i64::try_from(out) {
                    return v;
                }
            }
        }
    }
    (n_idx as f64 * (params.n as f64).powf(gamma)).floor() as i64
}

fn isqrt(v: u128) -> u128 {
    if v < 2 {
        return v;
    }
    let mut x = (v as f64).sqrt() as u128;
    // Newton correction to land exactly on floor(sqrt(v)).
    while x.checked_mul(x).map_or(true, |xx| xx > v) {
        x -= 1;
    }
    while (x + 1).checked_mul(x + 1).map_or(false, |xx| xx <= v) {
        x += 1;
    }
    x
}

/// Discrete curves embedded as piecewise-linear functions of real time:
/// `f_i(x) = N^{-gamma/2} (L_i(x N^gamma) - p x N^gamma)` on
/// `[-psi, psi]`, constant beyond.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaledEnsemble {
    pub params: ScalingParams,
    /// Integer times `-t_cap ..= t_cap` carry raw curve values.
    pub t_cap: i64,
    /// Raw (unscaled) curve values at the integer grid.
    pub raw: Vec<Vec<i64>>,
}

impl ScaledEnsemble {
    pub fn k(&self) -> usize {
        self.raw.len()
    }

    /// Grid abscissas `t N^{-gamma}` of the stored breakpoints.
    pub fn grid_x(&self) -> Vec<f64> {
        let ng = self.params.n_gamma();
        (-self.t_cap..=self.t_cap).map(|t| t as f64 / ng).collect()
    }

    fn raw_at(&self, curve: usize, u: f64) -> f64 {
        // Linear interpolation of the discrete path at real time u.
        let lo = u.floor() as i64;
        let lo = lo.clamp(-self.t_cap, self.t_cap - 1);
        let frac = u - lo as f64;
        let a = self.raw[curve][(lo + self.t_cap) as usize] as f64;
        let b = self.raw[curve][(lo + 1 + self.t_cap) as usize] as f64;
        a + frac * (b - a)
    }

    /// Evaluate curve `i` at real `x`, constant beyond `[-psi, psi]`.
    pub fn eval(&self, curve: usize, x: f64) -> f64 {
        let x = x.clamp(-self.params.psi, self.params.psi);
        let u = x * self.params.n_gamma();
        (self.raw_at(curve, u) - self.params.p * u) / self.params.n_gamma_half()
    }

    /// Scaled values at the stored breakpoints.
    pub fn scaled_values(&self, curve: usize) -> Vec<f64> {
        let ng = self.params.n_gamma();
        (-self.t_cap..=self.t_cap).map(|t| self.eval(curve, t as f64 / ng)).collect()
    }

    /// Inverse of the embedding at an integer grid time.
    pub fn unscale_at(&self, curve: usize, t: i64) -> f64 {
        let x = t as f64 / self.params.n_gamma();
        self.params.n_gamma_half() * self.eval(curve, x) + self.params.p * t as f64
    }
}

/// Embed a discrete ensemble on a symmetric interval `[-T, T]` with
/// `T >= psi N^gamma`.
pub fn scaled_embed(ensemble: &DiscreteEnsemble, params: &ScalingParams) -> Result<ScaledEnsemble> {
    params.validate()?;
    let t1 = ensemble.t1();
    if ensemble.t0 != -t1 {
        return Err(Error::domain(format!(
            "ensemble domain [{}, {}] is not symmetric about 0",
            ensemble.t0, t1
        )));
    }
    let needed = params.psi * params.n_gamma();
    if (t1 as f64) < needed {
        return Err(Error::domain(format!(
            "domain half-length {t1} shorter than psi N^gamma = {needed}"
        )));
    }
    let t_cap = (needed.ceil() as i64).min(t1);
    let offset = (ensemble.t0.unsigned_abs()) as usize;
    let lo = offset - t_cap as usize;
    let hi = offset + t_cap as usize;
    let raw = ensemble.curves.iter().map(|c| c[lo..=hi].to_vec()).collect();
    Ok(ScaledEnsemble { params: *params, t_cap, raw })
}

/// One row of the parabola diagnostic table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParabolaRow {
    pub n_idx: i64,
    /// The lattice time `floor(n N^gamma)` probed.
    pub lattice_t: i64,
    pub violations: u64,
    pub n_samples: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Frequency, per index `n`, of
/// `|N^{-gamma/2} (L_1(floor(n N^gamma)) - p floor(n N^gamma)) + lambda n^2|
///  >= phi + |n|^theta`.
///
/// `samples[s][j]` holds the top-curve value `L_1(floor(n_list[j] N^gamma))`
/// of sample `s`.
pub fn parabola_diagnostic(
    samples: &[Vec<i64>],
    n_list: &[i64],
    params: &ScalingParams,
    phi: f64,
    ci_level: f64,
) -> Result<Vec<ParabolaRow>> {
    params.validate()?;
    if samples.is_empty() {
        return Err(Error::domain("need at least one sample"));
    }
    if samples.iter().any(|row| row.len() != n_list.len()) {
        return Err(Error::domain("each sample must carry one value per probed index"));
    }
    let scale = params.n_gamma_half();
    let mut rows = Vec::with_capacity(n_list.len());
    for (j, &n_idx) in n_list.iter().enumerate() {
        let lattice_t = floor_lattice(n_idx, params);
        let threshold = phi + params.slack(n_idx);
        let mut violations = 0u64;
        for row in samples {
            let dev = (row[j] as f64 - params.p * lattice_t as f64) / scale
                + params.lambda * (n_idx as f64) * (n_idx as f64);
            if dev.abs() >= threshold {
                violations += 1;
            }
        }
        let n = samples.len() as u64;
        let (ci_low, ci_high) = binomial_ci(violations, n, ci_level)?;
        rows.push(ParabolaRow {
            n_idx,
            lattice_t,
            violations,
            n_samples: n,
            estimate: violations as f64 / n as f64,
            ci_low,
            ci_high,
        });
    }
    Ok(rows)
}

/// Which extreme-tail event to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSide {
    /// `sup over [-t3, t3] of (L_1(s) - p s) >= R N^{gamma/2}` (top curve).
    SupTop,
    /// `inf over [-t3, t3] of (L_{k-1}(s) - p s) <= -R N^{gamma/2}`
    /// (second curve from the bottom).
    InfBottom,
}

/// Frequency estimate of an extreme-tail event with a binomial CI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailEstimate {
    pub side: TailSide,
    pub threshold_r: f64,
    pub hits: u64,
    pub n_samples: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn extreme_tail_estimate(
    samples: &[DiscreteEnsemble],
    params: &ScalingParams,
    side: TailSide,
    threshold_r: f64,
    t3: i64,
    ci_level: f64,
) -> Result<TailEstimate> {
    params.validate()?;
    if samples.is_empty() {
        return Err(Error::domain("need at least one sample"));
    }
    let k = samples[0].k();
    let curve = match side {
        TailSide::SupTop => 0,
        TailSide::InfBottom => {
            if k < 2 {
                return Err(Error::domain("inf-side estimate needs k >= 2 (curve k-1)"));
            }
            k - 2
        }
    };
    let bound = threshold_r * params.n_gamma_half();
    let mut hits = 0u64;
    for s in samples {
        if -t3 < s.t0 || t3 > s.t1() {
            return Err(Error::domain(format!(
                "window [-{t3}, {t3}] outside sample domain [{}, {}]",
                s.t0,
                s.t1()
            )));
        }
        // The drift-corrected path is linear between integers, so extrema
        // over the real window are attained at integer times.
        let event = match side {
            TailSide::SupTop => (-t3..=t3)
                .map(|t| s.value(curve, t) as f64 - params.p * t as f64)
                .fold(f64::NEG_INFINITY, f64::max)
                >= bound,
            TailSide::InfBottom => (-t3..=t3)
                .map(|t| s.value(curve, t) as f64 - params.p * t as f64)
                .fold(f64::INFINITY, f64::min)
                <= -bound,
        };
        if event {
            hits += 1;
        }
    }
    let n = samples.len() as u64;
    let (ci_low, ci_high) = binomial_ci(hits, n, ci_level)?;
    Ok(TailEstimate {
        side,
        threshold_r,
        hits,
        n_samples: n,
        estimate: hits as f64 / n as f64,
        ci_low,
        ci_high,
    })
}

/// One row of the minimum-gap profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapRow {
    pub delta: f64,
    pub hits: u64,
    pub n_samples: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Per-delta frequency of `min_i (Q_i(t) - Q_{i+1}(t)) < delta sqrt(T)` over
/// avoiding ensembles on an interval of length `T`. Nondecreasing in delta
/// by construction (nested events).
pub fn min_gap_profile(
    samples: &[DiscreteEnsemble],
    t: i64,
    delta_grid: &[f64],
    ci_level: f64,
) -> Result<Vec<GapRow>> {
    if samples.is_empty() {
        return Err(Error::domain("need at least one sample"));
    }
    let k = samples[0].k();
    if k < 2 {
        return Err(Error::domain("minimum gap needs k >= 2"));
    }
    let span = (samples[0].t1() - samples[0].t0) as f64;
    let sqrt_t = span.sqrt();
    let min_gaps: Vec<f64> = samples
        .iter()
        .map(|s| {
            (0..k - 1)
                .map(|i| (s.value(i, t) - s.value(i + 1, t)) as f64)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let n = samples.len() as u64;
    let mut rows = Vec::with_capacity(delta_grid.len());
    for &delta in delta_grid {
        let hits = min_gaps.iter().filter(|g| **g < delta * sqrt_t).count() as u64;
        let (ci_low, ci_high) = binomial_ci(hits, n, ci_level)?;
        rows.push(GapRow {
            delta,
            hits,
            n_samples: n,
            estimate: hits as f64 / n as f64,
            ci_low,
            ci_high,
        });
    }
    Ok(rows)
}

/// Modulus of continuity of one embedded curve over grid pairs:
/// `sup over grid x, y in [window] with |x - y| < delta of |f(x) - f(y)|`,
/// computed with sliding-window extrema (monotone deques, O(m)).
pub fn modulus_of_continuity(
    ensemble: &ScaledEnsemble,
    curve: usize,
    delta: f64,
    window: (f64, f64),
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("delta = {delta} must be positive")));
    }
    if curve >= ensemble.k() {
        return Err(Error::domain(format!("curve index {curve} out of range")));
    }
    let xs_all = ensemble.grid_x();
    let vals_all = ensemble.scaled_values(curve);
    let pairs: Vec<(f64, f64)> = xs_all
        .into_iter()
        .zip(vals_all)
        .filter(|(x, _)| *x >= window.0 && *x <= window.1)
        .collect();
    if pairs.is_empty() {
        return Err(Error::domain(format!("window [{}, {}] contains no grid points", window.0, window.1)));
    }
    moc_over_grid(&pairs, delta)
}

/// Sliding-window max-min over an increasing abscissa grid, pairs with
/// strict separation `|x - y| < delta`.
pub fn moc_over_grid(points: &[(f64, f64)], delta: f64) -> Result<f64> {
    let mut best = 0.0f64;
    let mut max_deque: std::collections::VecDeque<usize> = Default::default();
    let mut min_deque: std::collections::VecDeque<usize> = Default::default();
    let mut left = 0usize;
    for j in 0..points.len() {
        while let Some(&back) = max_deque.back() {
            if points[back].1 <= points[j].1 {
                max_deque.pop_back();
            } else {
                break;
            }
        }
        max_deque.push_back(j);
        while let Some(&back) = min_deque.back() {
            if points[back].1 >= points[j].1 {
                min_deque.pop_back();
            } else {
                break;
            }
        }
        min_deque.push_back(j);

        while points[j].0 - points[left].0 >= delta {
            if max_deque.front() == Some(&left) {
                max_deque.pop_front();
            }
            if min_deque.front() == Some(&left) {
                min_deque.pop_front();
            }
            left += 1;
        }
        let hi = points[*max_deque.front().expect("nonempty window")].1;
        let lo = points[*min_deque.front().expect("nonempty window")].1;
        best = best.max(hi - lo);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u64, gamma: f64, p: f64, psi: f64) -> ScalingParams {
        ScalingParams { gamma, p, lambda: 1.0, theta: 0.5, n, psi }
    }

    fn line_ensemble(t_max: i64, f: impl Fn(i64) -> i64) -> DiscreteEnsemble {
        DiscreteEnsemble { t0: -t_max, curves: vec![(-t_max..=t_max).map(f).collect()] }
    }

    #[test]
    fn floor_lattice_integer_gamma_exact() {
        let p = params(10, 2.0, 0.0, 1.0);
        assert_eq!(floor_lattice(3, &p), 300);
        assert_eq!(floor_lattice(-3, &p), -300);
        assert_eq!(floor_lattice(0, &p), 0);
    }

    #[test]
    fn floor_lattice_half_integer_gamma_exact() {
        // N = 4, gamma = 1/2: N^gamma = 2 exactly.
        let p = params(4, 0.5, 0.0, 1.0);
        assert_eq!(floor_lattice(5, &p), 10);
        assert_eq!(floor_lattice(-5, &p), -10);
        // N = 2, gamma = 1/2: floor(3 sqrt 2) = 4, floor(-3 sqrt 2) = -5.
        let p = params(2, 0.5, 0.0, 1.0);
        assert_eq!(floor_lattice(3, &p), 4);
        assert_eq!(floor_lattice(-3, &p), -5);
        // gamma = 3/2, N = 2: floor(7 * 2^1.5) = floor(19.79) = 19.
        let p = params(2, 1.5, 0.0, 1.0);
        assert_eq!(floor_lattice(7, &p), 19);
        assert_eq!(floor_lattice(-7, &p), -20);
    }

    #[test]
    fn floor_lattice_matches_float_on_untidy_gamma() {
        let p = params(9, 0.7, 0.0, 1.0);
        let expect = (4.0 * 9.0f64.powf(0.7)).floor() as i64;
        assert_eq!(floor_lattice(4, &p), expect);
    }

    #[test]
    fn embed_cancels_integer_slope() {
        // L(t) = p t with integer p and gamma = 1: f vanishes on the grid.
        let p = params(4, 1.0, 2.0, 1.0);
        let e = line_ensemble(8, |t| 2 * t);
        let s = scaled_embed(&e, &p).unwrap();
        for v in s.scaled_values(0) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn embed_value_at_origin() {
        let p = params(4, 1.0, 0.25, 1.0);
        let e = line_ensemble(8, |_| 7);
        let s = scaled_embed(&e, &p).unwrap();
        // f(0) = N^{-gamma/2} L(0).
        assert!((s.eval(0, 0.0) - 7.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn embed_constant_extension() {
        let p = params(4, 1.0, 0.0, 1.5);
        let e = line_ensemble(8, |t| t);
        let s = scaled_embed(&e, &p).unwrap();
        let at_psi = s.eval(0, 1.5);
        assert_eq!(s.eval(0, 2.5), at_psi);
        assert_eq!(s.eval(0, 100.0), at_psi);
        let at_neg = s.eval(0, -1.5);
        assert_eq!(s.eval(0, -9.0), at_neg);
    }

    #[test]
    fn embed_rejects_short_domain() {
        let p = params(4, 1.0, 0.0, 3.0);
        let e = line_ensemble(8, |t| t);
        assert!(scaled_embed(&e, &p).is_err());
    }

    #[test]
    fn embed_unscale_round_trip() {
        let p = params(9, 1.0, 0.4, 1.0);
        let e = line_ensemble(16, |t| (t * t) / 8 - t);
        let s = scaled_embed(&e, &p).unwrap();
        for t in -s.t_cap..=s.t_cap {
            let back = s.unscale_at(0, t);
            let orig = e.value(0, t) as f64;
            assert!((back - orig).abs() < 1e-12, "t = {t}: {back} vs {orig}");
        }
    }

    #[test]
    fn parabola_diagnostic_zero_and_one() {
        // Synthetic top curve L(floor(n N^gamma)) = p floor(..) - lambda n^2 N^{gamma/2}
        // has deviation exactly 0; shifting by (phi + |n|^theta + 1) N^{gamma/2}
        // forces frequency 1.
        let prm = ScalingParams { gamma: 1.0, p: 1.0, lambda: 0.5, theta: 0.5, n: 16, psi: 4.0 };
        let n_list: Vec<i64> = vec![-2, -1, 0, 1, 2];
        let phi = 0.75;
        let scale = prm.n_gamma_half();
        let exact: Vec<i64> = n_list
            .iter()
            .map(|&n| {
                let t = floor_lattice(n, &prm);
                (prm.p * t as f64 - prm.lambda * (n * n) as f64 * scale).round() as i64
            })
            .collect();
        let rows = parabola_diagnostic(&[exact.clone()], &n_list, &prm, phi, 0.95).unwrap();
        for r in &rows {
            assert_eq!(r.violations, 0, "n = {}", r.n_idx);
            assert!(r.ci_low <= r.estimate && r.estimate <= r.ci_high);
        }

        let shifted: Vec<i64> = n_list
            .iter()
            .zip(&exact)
            .map(|(&n, &v)| v + (((phi + prm.slack(n) + 1.0) * scale).ceil() as i64))
            .collect();
        let rows = parabola_diagnostic(&[shifted], &n_list, &prm, phi, 0.95).unwrap();
        for r in &rows {
            assert_eq!(r.estimate, 1.0, "n = {}", r.n_idx);
        }
    }

    #[test]
    fn tail_estimate_basics() {
        let prm = params(16, 1.0, 0.0, 1.0);
        // Deterministic flat two-curve ensembles at 0 and -1.
        let samples: Vec<DiscreteEnsemble> = (0..50)
            .map(|_| DiscreteEnsemble {
                t0: -8,
                curves: vec![vec![0; 17], vec![-1; 17]],
            })
            .collect();
        let e = extreme_tail_estimate(&samples, &prm, TailSide::SupTop, 1.0, 4, 0.95).unwrap();
        assert_eq!(e.estimate, 0.0);
        // Monotone nonincreasing in R.
        let e1 = extreme_tail_estimate(&samples, &prm, TailSide::SupTop, 0.0, 4, 0.95).unwrap();
        assert!(e1.estimate >= e.estimate);
        let e2 = extreme_tail_estimate(&samples, &prm, TailSide::InfBottom, 1.0, 4, 0.95).unwrap();
        assert_eq!(e2.estimate, 0.0);
    }

    #[test]
    fn gap_profile_point_mass_and_monotone() {
        // Two parallel curves at gap G = 4 on [0, 16]: frequency jumps from 0
        // to 1 at delta = G / sqrt(T) = 1.
        let samples: Vec<DiscreteEnsemble> = (0..20)
            .map(|_| DiscreteEnsemble { t0: 0, curves: vec![vec![4; 17], vec![0; 17]] })
            .collect();
        let rows = min_gap_profile(&samples, 8, &[0.5, 0.99, 1.01, 2.0], 0.95).unwrap();
        assert_eq!(rows[0].estimate, 0.0);
        assert_eq!(rows[1].estimate, 0.0);
        assert_eq!(rows[2].estimate, 1.0);
        assert_eq!(rows[3].estimate, 1.0);
        for w in rows.windows(2) {
            assert!(w[0].estimate <= w[1].estimate);
        }
    }

    #[test]
    fn gap_profile_needs_two_curves() {
        let samples = vec![DiscreteEnsemble { t0: 0, curves: vec![vec![0; 5]] }];
        assert!(min_gap_profile(&samples, 2, &[0.5], 0.95).is_err());
    }

    #[test]
    fn moc_constant_curve_is_zero() {
        let p = params(4, 1.0, 0.0, 2.0);
        let e = line_ensemble(8, |_| 3);
        let s = scaled_embed(&e, &p).unwrap();
        let w = modulus_of_continuity(&s, 0, 0.7, (-2.0, 2.0)).unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn moc_linear_curve_hits_largest_pair_below_delta() {
        // f(x) = c x on a grid of step 1/4: sup over pairs |x-y| < delta is
        // c * (largest representable distance below delta).
        let p = params(4, 1.0, 0.0, 2.0);
        let e = line_ensemble(8, |t| 3 * t);
        let s = scaled_embed(&e, &p).unwrap();
        // c = 3 * N^{gamma/2} / N^{gamma} ... eval: f(x) = (3 x N - 0)/N^{1/2} = 3x*2 = 6x.
        let w = modulus_of_continuity(&s, 0, 0.6, (-2.0, 2.0)).unwrap();
        // step 0.25; largest pair distance < 0.6 is 0.5; slope 6 -> 3.0.
        assert!((w - 3.0).abs() < 1e-12, "w = {w}");
        // Exactly at a representable distance the strict inequality bites.
        let w = modulus_of_continuity(&s, 0, 0.5, (-2.0, 2.0)).unwrap();
        assert!((w - 1.5).abs() < 1e-12, "w = {w}");
    }

    #[test]
    fn moc_matches_bruteforce_pair_scan() {
        let p = params(4, 1.0, 0.3, 2.0);
        let e = line_ensemble(8, |t| (t * t - 3 * t) / 3);
        let s = scaled_embed(&e, &p).unwrap();
        let xs = s.grid_x();
        let vs = s.scaled_values(0);
        for delta in [0.3, 0.5, 0.9, 1.7] {
            let mut brute = 0.0f64;
            for i in 0..xs.len() {
                for j in 0..xs.len() {
                    if (xs[i] - xs[j]).abs() < delta {
                        brute = brute.max((vs[i] - vs[j]).abs());
                    }
                }
            }
            let fast = modulus_of_continuity(&s, 0, delta, (-2.0, 2.0)).unwrap();
            assert!((fast - brute).abs() < 1e-12, "delta {delta}: {fast} vs {brute}");
        }
    }

    #[test]
    fn moc_monotone_in_delta_and_subadditive_on_unions() {
        let p = params(4, 1.0, 0.0, 2.0);
        let e = line_ensemble(8, |t| (t * t) / 4 - t);
        let s = scaled_embed(&e, &p).unwrap();
        let mut prev = 0.0;
        for delta in [0.1, 0.3, 0.6, 1.2, 2.4] {
            let w = modulus_of_continuity(&s, 0, delta, (-2.0, 2.0)).unwrap();
            assert!(w >= prev);
            prev = w;
        }
        // Adjacent windows: max(w_A, w_B) <= w_{A u B} <= w_A + w_B (pairs
        // across the shared point split at it).
        let whole = modulus_of_continuity(&s, 0, 0.6, (-2.0, 2.0)).unwrap();
        let left = modulus_of_continuity(&s, 0, 0.6, (-2.0, 0.0)).unwrap();
        let right = modulus_of_continuity(&s, 0, 0.6, (0.0, 2.0)).unwrap();
        assert!(whole + 1e-15 >= left.max(right));
        assert!(whole <= left + right + 1e-15);
    }

    #[test]
    fn moc_empty_window_errors() {
        let p = params(4, 1.0, 0.0, 2.0);
        let e = line_ensemble(8, |t| t);
        let s = scaled_embed(&e, &p).unwrap();
        assert!(modulus_of_continuity(&s, 0, 0.5, (5.0, 6.0)).is_err());
    }
}
