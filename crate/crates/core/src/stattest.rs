//! Statistical machinery: empirical-CDF tests, binomial intervals, chi-square
//! goodness of fit, and the two composite checks — Gibbs resampling
//! consistency and scaled weak convergence.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::avoid::{
    maximal_config, AvoidanceSpec, ConstraintSet, DiscreteEnsemble, MetropolisChain,
    RejectionSampler, SampleMethod,
};
use crate::brownian::{sample_avoiding_brownian, ContinuousBarrier};
use crate::error::{Error, Result};
use crate::hamiltonian::{tilt_to_mean, Hamiltonian};

/// Outcome of a single statistical test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub p_value: f64,
    /// Sample sizes entering the test.
    pub n: Vec<u64>,
    pub level: f64,
    /// `p_value >= level`.
    pub verdict: bool,
    pub metadata: BTreeMap<String, String>,
}

impl TestReport {
    fn new(statistic: f64, p_value: f64, n: Vec<u64>, level: f64) -> Self {
        TestReport { statistic, p_value, n, level, verdict: p_value >= level, metadata: BTreeMap::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }
}

/// CDF of the Kolmogorov distribution (Numerical Recipes evaluation: theta
/// series for small z, complementary series for large z).
pub fn kolmogorov_cdf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z < 1.18 {
        let y = (-1.233_700_550_136_169_7 / (z * z)).exp();
        2.256_758_334_191_025 * (-y.ln()).sqrt() * (y + y.powi(9) + y.powi(25) + y.powi(49))
    } else {
        let x = (-2.0 * z * z).exp();
        1.0 - 2.0 * (x - x.powi(4) + x.powi(9))
    }
}

/// Complementary CDF of the Kolmogorov distribution.
pub fn kolmogorov_sf(z: f64) -> f64 {
    (1.0 - kolmogorov_cdf(z)).clamp(0.0, 1.0)
}

/// Two-sample KS statistic: sup over x of |ECDF_a(x) - ECDF_b(x)|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("KS test needs nonempty samples"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.total_cmp(q));
    ys.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Two-sample KS test with the asymptotic p-value
/// `Q_KS(sqrt(n m / (n + m)) D)`.
pub fn ks_two_sample(a: &[f64], b: &[f64], level: f64) -> Result<TestReport> {
    let d = ks_statistic(a, b)?;
    let ne = (a.len() as f64 * b.len() as f64) / (a.len() + b.len()) as f64;
    let p = kolmogorov_sf(ne.sqrt() * d);
    Ok(TestReport::new(d, p, vec![a.len() as u64, b.len() as u64], level))
}

/// One-sample KS test against an exact CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64, level: f64) -> Result<TestReport> {
    if samples.is_empty() {
        return Err(Error::domain("KS test needs a nonempty sample"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|p, q| p.total_cmp(q));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let p = kolmogorov_sf(n.sqrt() * d);
    Ok(TestReport::new(d, p, vec![xs.len() as u64], level))
}

/// Wilson score interval for a binomial proportion.
pub fn binomial_ci(hits: u64, trials: u64, level: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::domain("binomial interval needs at least one trial"));
    }
    if hits > trials {
        return Err(Error::domain(format!("hits {hits} exceed trials {trials}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("confidence level {level} must lie in (0, 1)")));
    }
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + level / 2.0);
    let n = trials as f64;
    let p_hat = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p_hat + z2 / (2.0 * n)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

/// Chi-square goodness of fit of observed counts against cell probabilities.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<TestReport> {
    if counts.len() != probs.len() || counts.is_empty() {
        return Err(Error::domain("counts and probabilities must be nonempty and aligned"));
    }
    let total_p: f64 = probs.iter().sum();
    if (total_p - 1.0).abs() > 1e-6 {
        return Err(Error::domain(format!("cell probabilities sum to {total_p}, expected 1")));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::domain("no observations"));
    }
    let mut statistic = 0.0;
    let mut df = 0i64;
    for (&o, &p) in counts.iter().zip(probs) {
        if p <= 0.0 {
            if o > 0 {
                return Ok(TestReport::new(f64::INFINITY, 0.0, vec![n], 0.001));
            }
            continue;
        }
        let expected = n as f64 * p;
        statistic += (o as f64 - expected).powi(2) / expected;
        df += 1;
    }
    df -= 1;
    if df < 1 {
        // Single cell: the fit is exact by normalization.
        return Ok(TestReport::new(0.0, 1.0, vec![n], 0.001));
    }
    let p_value = 1.0 - ChiSquared::new(df as f64).expect("positive dof").cdf(statistic);
    Ok(TestReport::new(statistic, p_value, vec![n], 0.001).with_meta("df", df))
}

/// Interior statistic compared between original and resampled populations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteriorStatistic {
    /// Value of the top resampled curve at the window midpoint.
    CurveAtMidpoint,
    /// Value of a specific curve (1-indexed, global) at a specific time.
    CurveAt { curve: usize, t: i64 },
}

/// Interior resampling strategy for the Gibbs test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    /// Exact conditional draws by rejection.
    Exact { max_tries: u64 },
    /// Deliberately broken resampler that accepts every admissible
    /// Metropolis candidate (uniform law instead of the bridge law). Used to
    /// calibrate the power of the test.
    BiasedAlwaysAccept { proposals: u64 },
}

/// Configuration of the Gibbs resampling consistency test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub spec: AvoidanceSpec,
    /// Resampling window `[a, b]` inside the ensemble interval.
    pub window: (i64, i64),
    /// Resampled curve range (1-indexed, inclusive); the upper index must
    /// leave at least one curve below as boundary data.
    pub curves: (usize, usize),
    pub statistic: InteriorStatistic,
    pub n_samples: usize,
    pub level: f64,
    pub sampler: SampleMethod,
    pub resample: ResampleMode,
}

/// Resampling-invariance check of the Gibbs property: draw full ensembles,
/// freeze the boundary data of a window (entry/exit values of the resampled
/// curves plus the neighboring curves along the window), redraw the interior
/// from the conditional avoiding law, and compare an interior statistic
/// between the original and resampled populations with a two-sample KS test.
///
/// Lattice-valued statistics are dequantized with additive uniform jitter
/// (the same mechanism on both populations) so that KS p-values stay
/// calibrated in the presence of ties.
pub fn gibbs_resampling_test<R: Rng + ?Sized>(
    h: &Hamiltonian,
    config: &GibbsConfig,
    rng: &mut R,
) -> Result<TestReport> {
    let spec = &config.spec;
    let (a, b) = config.window;
    let (k1, k2) = config.curves;
    let k = spec.k();
    if !(spec.t0 <= a && a < b && b <= spec.t1) {
        return Err(Error::domain(format!("window [{a}, {b}] not inside [{}, {}]", spec.t0, spec.t1)));
    }
    if !(1 <= k1 && k1 <= k2 && k2 <= k.saturating_sub(1)) {
        return Err(Error::domain(format!(
            "curve range [{k1}, {k2}] invalid for k = {k}: the bottom curve is boundary data"
        )));
    }
    if config.n_samples == 0 {
        return Err(Error::domain("n_samples must be positive"));
    }

    let (stat_curve, stat_t) = match config.statistic {
        InteriorStatistic::CurveAtMidpoint => (k1, a + (b - a) / 2),
        InteriorStatistic::CurveAt { curve, t } => (curve, t),
    };
    if stat_curve < k1 || stat_curve > k2 || stat_t < a || stat_t > b {
        return Err(Error::domain("statistic must probe a resampled curve inside the window"));
    }

    let originals =
        crate::avoid::sample_avoiding(h, spec, config.sampler, config.n_samples, rng)?;

    let mut stat_orig = Vec::with_capacity(originals.len());
    let mut stat_res = Vec::with_capacity(originals.len());
    for original in &originals {
        stat_orig.push(original.value(stat_curve - 1, stat_t) as f64 + rng.random::<f64>());

        let interior = interior_spec(spec, original, (a, b), (k1, k2));
        let resampled = match config.resample {
            ResampleMode::Exact { max_tries } => {
                let mut sampler = RejectionSampler::new(h, &interior)?;
                sampler.sample(max_tries, rng)?
            }
            ResampleMode::BiasedAlwaysAccept { proposals } => {
                let mut chain = MetropolisChain::new(h, &interior)?;
                for _ in 0..proposals {
                    chain.step_skip_ratio(rng);
                }
                chain.state().clone()
            }
        };
        stat_res.push(resampled.value(stat_curve - k1, stat_t) as f64 + rng.random::<f64>());
    }

    let mut report = ks_two_sample(&stat_orig, &stat_res, config.level)?;
    report.metadata.insert("test".into(), "gibbs-resampling".into());
    report.metadata.insert("window".into(), format!("[{a}, {b}]"));
    report.metadata.insert("curves".into(), format!("[{k1}, {k2}]"));
    report.metadata.insert("statistic_at".into(), format!("curve {stat_curve} t {stat_t}"));
    Ok(report)
}

/// Conditional interior spec given the boundary data of one sampled ensemble.
fn interior_spec(
    spec: &AvoidanceSpec,
    sample: &DiscreteEnsemble,
    window: (i64, i64),
    curves: (usize, usize),
) -> AvoidanceSpec {
    let (a, b) = window;
    let (k1, k2) = curves;
    let len = (b - a + 1) as usize;
    let entry: Vec<i64> = (k1..=k2).map(|i| sample.value(i - 1, a)).collect();
    let exit: Vec<i64> = (k1..=k2).map(|i| sample.value(i - 1, b)).collect();

    // Upper boundary: the ensemble's top barrier and the curve above the
    // window, whichever is tighter.
    let top: Option<Vec<i64>> = {
        let from_curve: Option<Vec<i64>> =
            (k1 >= 2).then(|| (a..=b).map(|t| sample.value(k1 - 2, t)).collect());
        match (&spec.top, from_curve) {
            (Some(f), Some(c)) => Some(
                (0..len).map(|j| f[(a - spec.t0) as usize + j].min(c[j])).collect(),
            ),
            (Some(f), None) => Some(f[(a - spec.t0) as usize..=(b - spec.t0) as usize].to_vec()),
            (None, Some(c)) => Some(c),
            (None, None) => None,
        }
    };
    // Lower boundary: curve k2 + 1 always exists (k2 <= k - 1).
    let below: Vec<i64> = (a..=b).map(|t| sample.value(k2, t)).collect();
    let bottom: Option<Vec<i64>> = match &spec.bottom {
        Some(g) => Some(
            (0..len).map(|j| g[(a - spec.t0) as usize + j].max(below[j])).collect(),
        ),
        None => Some(below),
    };

    let constraint = match &spec.constraint {
        ConstraintSet::All => ConstraintSet::All,
        ConstraintSet::Times(set) => {
            ConstraintSet::Times(set.iter().copied().filter(|t| (a..=b).contains(t)).collect())
        }
    };

    AvoidanceSpec { t0: a, t1: b, entry, exit, top, bottom, constraint }
}

/// Configuration of the scaled weak-convergence test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    /// Walk slope; the discrete endpoints follow
    /// `floor(sigma sqrt(T) x_i + p T)` at the right end and
    /// `floor(sigma sqrt(T) x_i)` at the left.
    pub p: f64,
    /// Scaled entry data (strictly decreasing).
    pub entry_scaled: Vec<f64>,
    /// Scaled exit data (strictly decreasing).
    pub exit_scaled: Vec<f64>,
    /// Increasing horizons to test.
    pub t_list: Vec<i64>,
    /// Interior time fraction probed.
    pub t_frac: f64,
    pub n_samples: usize,
    /// Reference draws from the avoiding-Brownian sampler.
    pub n_reference: usize,
    /// Grid size of the reference sampler.
    pub ref_grid: usize,
    pub level: f64,
    /// Per-draw rejection budget on the discrete side.
    pub max_tries: u64,
    /// Override for the diffusion scale; `None` uses the tilted-variance
    /// `sigma_p`. Supplying a wrong value makes the test reject.
    pub sigma_override: Option<f64>,
}

/// Per-horizon result plus the overall verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceOutcome {
    pub reports: Vec<TestReport>,
    /// KS distance to the Brownian reference per horizon.
    pub distances: Vec<f64>,
    /// Distances nonincreasing along the horizon list and final p-value at
    /// or above the level.
    pub pass: bool,
}

/// Scaled weak-convergence test: for each horizon `T`, sample avoiding
/// ensembles with endpoints matched to the scaled data, slice
/// `Z_i = (Q_i(t T) - p t T) / (sigma sqrt(T))`, and compare each curve's
/// marginal against the avoiding-Brownian reference at the same time, plus
/// the previous horizon's slice.
pub fn convergence_test<R: Rng + ?Sized>(
    h: &Hamiltonian,
    config: &ConvergenceConfig,
    rng: &mut R,
) -> Result<ConvergenceOutcome> {
    let k = config.entry_scaled.len();
    if k == 0 || config.exit_scaled.len() != k {
        return Err(Error::domain("entry and exit data must be nonempty and of equal length"));
    }
    if !(config.p > h.alpha() as f64 && config.p < h.beta() as f64) {
        return Err(Error::domain(format!(
            "slope p = {} outside the open support interval ({}, {})",
            config.p,
            h.alpha(),
            h.beta()
        )));
    }
    if !(config.t_frac > 0.0 && config.t_frac < 1.0) {
        return Err(Error::domain(format!("interior fraction {} outside (0, 1)", config.t_frac)));
    }
    if config.t_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("horizon list must be strictly increasing"));
    }

    let sigma = match config.sigma_override {
        Some(s) => s,
        None => tilt_to_mean(h, config.p)?.sigma2.sqrt(),
    };

    // Brownian reference at the probed time: k strictly ordered variance-1
    // bridges on [0, 1] through the scaled data.
    let ref_index = ((config.t_frac * config.ref_grid as f64).round() as usize).min(config.ref_grid);
    let mut reference: Vec<Vec<f64>> = vec![Vec::with_capacity(config.n_reference); k];
    for _ in 0..config.n_reference {
        let draw = sample_avoiding_brownian(
            1.0,
            0.0,
            1.0,
            &config.entry_scaled,
            &config.exit_scaled,
            ContinuousBarrier::Unbounded,
            ContinuousBarrier::Unbounded,
            config.ref_grid,
            config.max_tries,
            rng,
        )?;
        for (i, curve) in draw.ensemble.curves.iter().enumerate() {
            reference[i].push(curve[ref_index]);
        }
    }

    let mut reports = Vec::with_capacity(config.t_list.len());
    let mut distances = Vec::with_capacity(config.t_list.len());
    let mut previous: Option<Vec<Vec<f64>>> = None;
    for &t_horizon in &config.t_list {
        let sqrt_t = (t_horizon as f64).sqrt();
        let entry: Vec<i64> =
            config.entry_scaled.iter().map(|x| (sigma * sqrt_t * x).floor() as i64).collect();
        let exit: Vec<i64> = config
            .exit_scaled
            .iter()
            .map(|y| (sigma * sqrt_t * y + config.p * t_horizon as f64).floor() as i64)
            .collect();
        let spec = AvoidanceSpec::new(0, t_horizon, entry, exit);
        maximal_config(h, &spec)?;
        let slice_t = (config.t_frac * t_horizon as f64).floor() as i64;

        let mut sampler = RejectionSampler::new(h, &spec)?;
        let mut slices: Vec<Vec<f64>> = vec![Vec::with_capacity(config.n_samples); k];
        for _ in 0..config.n_samples {
            let e = sampler.sample(config.max_tries, rng)?;
            for (i, slice) in slices.iter_mut().enumerate() {
                slice.push((e.value(i, slice_t) as f64 - config.p * slice_t as f64) / (sigma * sqrt_t));
            }
        }

        let mut d_ref: f64 = 0.0;
        let mut p_ref: f64 = 1.0;
        for i in 0..k {
            let r = ks_two_sample(&slices[i], &reference[i], config.level)?;
            d_ref = d_ref.max(r.statistic);
            p_ref = p_ref.min(r.p_value);
        }
        let d_prev = match &previous {
            Some(prev) => {
                let mut d: f64 = 0.0;
                for i in 0..k {
                    d = d.max(ks_statistic(&slices[i], &prev[i])?);
                }
                Some(d)
            }
            None => None,
        };

        let mut report = TestReport::new(d_ref, p_ref, vec![config.n_samples as u64, config.n_reference as u64], config.level);
        report.metadata.insert("test".into(), "scaled-convergence".into());
        report.metadata.insert("t_horizon".into(), t_horizon.to_string());
        report.metadata.insert("slice_t".into(), slice_t.to_string());
        report.metadata.insert("sigma".into(), format!("{sigma}"));
        if let Some(d) = d_prev {
            report.metadata.insert("d_to_previous".into(), format!("{d}"));
        }
        reports.push(report);
        distances.push(d_ref);
        previous = Some(slices);
    }

    let nonincreasing = distances.windows(2).all(|w| w[1] <= w[0]);
    let final_ok = reports.last().map(|r| r.verdict).unwrap_or(false);
    Ok(ConvergenceOutcome { reports, distances, pass: nonincreasing && final_ok })
}
