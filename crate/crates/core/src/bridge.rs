//! Exact sampling and evaluation of single random-walk bridges with pinned
//! endpoints.
//!
//! All partition arithmetic is done in log space with log-sum-exp; horizons
//! up to ~10^4 steps underflow raw products. Partition tables are built once
//! per (Hamiltonian, horizon) and keyed by displacement, so the sequential
//! sampler reuses suffix tables instead of recomputing convolutions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;

/// Endpoint data of a single bridge: from `(t0, z0)` to `(t1, z1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeSpec {
    pub t0: i64,
    pub t1: i64,
    pub z0: i64,
    pub z1: i64,
}

impl BridgeSpec {
    pub fn new(t0: i64, t1: i64, z0: i64, z1: i64) -> Self {
        BridgeSpec { t0, t1, z0, z1 }
    }

    pub fn steps(&self) -> i64 {
        self.t1 - self.t0
    }

    pub fn displacement(&self) -> i64 {
        self.z1 - self.z0
    }

    /// Check that the path space `Omega(t0, t1, z0, z1)` is nonempty under `h`.
    pub fn validate(&self, h: &Hamiltonian) -> Result<()> {
        if self.t0 >= self.t1 {
            return Err(Error::domain(format!("need t0 < t1, got [{}, {}]", self.t0, self.t1)));
        }
        let n = self.steps();
        let d = self.displacement();
        if d < h.alpha() * n || d > h.beta() * n {
            return Err(Error::infeasible(format!(
                "displacement {d} over {n} steps outside [{}, {}]",
                h.alpha() * n,
                h.beta() * n
            )));
        }
        Ok(())
    }

    /// Values reachable from `(t0, z0)` that can still reach `(t1, z1)`,
    /// as a closed interval at time `t`.
    pub fn reachable_range(&self, h: &Hamiltonian, t: i64) -> (i64, i64) {
        let fwd = t - self.t0;
        let bwd = self.t1 - t;
        let lo = (self.z0 + h.alpha() * fwd).max(self.z1 - h.beta() * bwd);
        let hi = (self.z0 + h.beta() * fwd).min(self.z1 - h.alpha() * bwd);
        (lo, hi)
    }
}

/// Integer-valued path on `[t0, t0 + values.len() - 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscretePath {
    pub t0: i64,
    pub values: Vec<i64>,
}

impl DiscretePath {
    pub fn new(t0: i64, values: Vec<i64>) -> Self {
        DiscretePath { t0, values }
    }

    pub fn constant(t0: i64, t1: i64, value: i64) -> Self {
        DiscretePath { t0, values: vec![value; (t1 - t0 + 1) as usize] }
    }

    pub fn t1(&self) -> i64 {
        self.t0 + self.values.len() as i64 - 1
    }

    pub fn value(&self, t: i64) -> i64 {
        self.values[(t - self.t0) as usize]
    }

    pub fn increments(&self) -> impl Iterator<Item = i64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }
}

/// Log partition values `log Z(r, d)` over all step counts `r <= horizon`,
/// where `Z(r, d)` sums path weights over `r`-step paths with displacement `d`.
#[derive(Debug, Clone)]
pub struct PartitionTable {
    alpha: i64,
    beta: i64,
    /// `rows[r]` holds `log Z(r, d)` for `d = alpha*r ..= beta*r`.
    rows: Vec<Vec<f64>>,
}

impl PartitionTable {
    pub fn new(h: &Hamiltonian, horizon: i64) -> Result<Self> {
        if horizon < 0 {
            return Err(Error::domain(format!("horizon {horizon} < 0")));
        }
        let alpha = h.alpha();
        let beta = h.beta();
        let span = (beta - alpha) as usize;
        let logw: Vec<f64> = h.weights().iter().map(|w| w.ln()).collect();

        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(horizon as usize + 1);
        rows.push(vec![0.0]);
        for r in 1..=horizon as usize {
            let prev = &rows[r - 1];
            let width = span * r + 1;
            let mut row = vec![f64::NEG_INFINITY; width];
            // row[d - alpha*r] = logsumexp_j ( logw[j] + prev[d - j - alpha*(r-1)] )
            for (i, cell) in row.iter_mut().enumerate() {
                // increment offsets j from alpha with prev index i - j in range
                let mut max = f64::NEG_INFINITY;
                let j_lo = i.saturating_sub(prev.len() - 1);
                let j_hi = i.min(span);
                for j in j_lo..=j_hi {
                    let v = logw[j] + prev[i - j];
                    if v > max {
                        max = v;
                    }
                }
                if max > f64::NEG_INFINITY {
                    let mut acc = 0.0;
                    for j in j_lo..=j_hi {
                        acc += (logw[j] + prev[i - j] - max).exp();
                    }
                    *cell = max + acc.ln();
                }
            }
            rows.push(row);
        }
        Ok(PartitionTable { alpha, beta, rows })
    }

    pub fn horizon(&self) -> i64 {
        self.rows.len() as i64 - 1
    }

    /// `log Z(steps, displacement)`; `-inf` when no path exists.
    pub fn log_partition(&self, steps: i64, displacement: i64) -> f64 {
        if steps < 0 || steps >= self.rows.len() as i64 {
            return f64::NEG_INFINITY;
        }
        let lo = self.alpha * steps;
        let hi = self.beta * steps;
        if displacement < lo || displacement > hi {
            return f64::NEG_INFINITY;
        }
        self.rows[steps as usize][(displacement - lo) as usize]
    }
}

/// One-shot log partition: `log` of the total weight of `n`-step paths with
/// displacement `d`; `-inf` when `d` is unreachable.
pub fn log_partition(h: &Hamiltonian, n: i64, d: i64) -> Result<f64> {
    if n < 0 {
        return Err(Error::domain(format!("step count {n} < 0")));
    }
    if d < h.alpha() * n || d > h.beta() * n {
        return Ok(f64::NEG_INFINITY);
    }
    let table = PartitionTable::new(h, n)?;
    Ok(table.log_partition(n, d))
}

/// Exact sampler for a bridge spec; builds the suffix partition table once
/// and draws paths by sequential one-step conditionals.
#[derive(Debug, Clone)]
pub struct BridgeSampler {
    h: Hamiltonian,
    spec: BridgeSpec,
    table: PartitionTable,
}

impl BridgeSampler {
    pub fn new(h: &Hamiltonian, spec: BridgeSpec) -> Result<Self> {
        spec.validate(h)?;
        let table = PartitionTable::new(h, spec.steps())?;
        Ok(BridgeSampler { h: h.clone(), spec, table })
    }

    pub fn spec(&self) -> BridgeSpec {
        self.spec
    }

    /// Conditional distribution of the next value given the bridge sits at
    /// `(t, z)`: `P(next = z + j) ∝ w(j) Z(t1 - t - 1, z1 - z - j)`.
    pub fn step_distribution(&self, t: i64, z: i64) -> Result<Vec<(i64, f64)>> {
        if t < self.spec.t0 || t >= self.spec.t1 {
            return Err(Error::domain(format!("time {t} outside [{}, {})", self.spec.t0, self.spec.t1)));
        }
        let (lo, hi) = self.spec.reachable_range(&self.h, t);
        if z < lo || z > hi {
            return Err(Error::domain(format!("state ({t}, {z}) unreachable for bridge {:?}", self.spec)));
        }
        let remaining = self.spec.t1 - t - 1;
        let mut entries: Vec<(i64, f64)> = Vec::with_capacity(self.h.support_len());
        let mut max = f64::NEG_INFINITY;
        for (j, _) in self.h.support() {
            let lw = self.h.log_weight(j) + self.table.log_partition(remaining, self.spec.z1 - z - j);
            if lw > f64::NEG_INFINITY {
                entries.push((z + j, lw));
                if lw > max {
                    max = lw;
                }
            }
        }
        let mut total = 0.0;
        for (_, lw) in &mut entries {
            *lw = (*lw - max).exp();
            total += *lw;
        }
        for (_, w) in &mut entries {
            *w /= total;
        }
        Ok(entries)
    }

    /// Exact draw from the bridge measure; endpoints match the spec exactly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DiscretePath {
        let n = self.spec.steps() as usize;
        let mut values = Vec::with_capacity(n + 1);
        values.push(self.spec.z0);
        let mut z = self.spec.z0;
        let mut scratch = vec![0.0f64; self.h.support_len()];
        for t in self.spec.t0..self.spec.t1 {
            z = self.sample_step(t, z, rng, &mut scratch);
            values.push(z);
        }
        debug_assert_eq!(z, self.spec.z1);
        DiscretePath { t0: self.spec.t0, values }
    }

    /// One sequential step without allocating a distribution vector.
    fn sample_step<R: Rng + ?Sized>(&self, t: i64, z: i64, rng: &mut R, scratch: &mut [f64]) -> i64 {
        let remaining = self.spec.t1 - t - 1;
        let alpha = self.h.alpha();
        let mut max = f64::NEG_INFINITY;
        for (j, slot) in scratch.iter_mut().enumerate() {
            let inc = alpha + j as i64;
            let lw = self.h.log_weight(inc)
                + self.table.log_partition(remaining, self.spec.z1 - z - inc);
            *slot = lw;
            if lw > max {
                max = lw;
            }
        }
        debug_assert!(max > f64::NEG_INFINITY, "state ({t}, {z}) must be reachable");
        let mut total = 0.0;
        for slot in scratch.iter_mut() {
            *slot = (*slot - max).exp();
            total += *slot;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = scratch.len() - 1;
        for (j, w) in scratch.iter().enumerate() {
            acc += *w;
            if target < acc {
                chosen = j;
                break;
            }
        }
        // Guard against roundoff landing past a zero-weight tail cell.
        while scratch[chosen] == 0.0 {
            chosen -= 1;
        }
        z + alpha + chosen as i64
    }
}

/// Conditional next-value distribution without retaining a sampler.
pub fn step_distribution(h: &Hamiltonian, spec: BridgeSpec, t: i64, z: i64) -> Result<Vec<(i64, f64)>> {
    BridgeSampler::new(h, spec)?.step_distribution(t, z)
}

/// Exact draw from the bridge measure without retaining a sampler. For
/// repeated draws from one spec, construct a [`BridgeSampler`] instead.
pub fn sample_bridge<R: Rng + ?Sized>(h: &Hamiltonian, spec: BridgeSpec, rng: &mut R) -> Result<DiscretePath> {
    Ok(BridgeSampler::new(h, spec)?.sample(rng))
}

/// Log of the normalized bridge probability of `path` under the spec's
/// measure: sum of increment log-weights minus the log partition. Returns
/// `-inf` for inadmissible increments.
pub fn path_log_weight(h: &Hamiltonian, spec: BridgeSpec, path: &DiscretePath) -> Result<f64> {
    if path.t0 != spec.t0
        || path.t1() != spec.t1
        || path.values.first() != Some(&spec.z0)
        || path.values.last() != Some(&spec.z1)
    {
        return Err(Error::domain("path endpoints do not match the bridge spec".to_string()));
    }
    let mut logw = 0.0;
    for inc in path.increments() {
        logw += h.log_weight(inc);
        if logw == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
    }
    Ok(logw - log_partition(h, spec.steps(), spec.displacement())?)
}

/// Enumerate every admissible path of the spec together with its
/// unnormalized log weight. Brute-force oracle for small fixtures; the
/// count is capped to protect against runaway enumerations.
pub fn enumerate_paths(h: &Hamiltonian, spec: BridgeSpec, cap: usize) -> Result<Vec<(DiscretePath, f64)>> {
    spec.validate(h)?;
    let mut out = Vec::new();
    let mut prefix = vec![spec.z0];
    enumerate_rec(h, spec, &mut prefix, 0.0, &mut out, cap)?;
    Ok(out)
}

fn enumerate_rec(
    h: &Hamiltonian,
    spec: BridgeSpec,
    prefix: &mut Vec<i64>,
    logw: f64,
    out: &mut Vec<(DiscretePath, f64)>,
    cap: usize,
) -> Result<()> {
    let t = spec.t0 + prefix.len() as i64 - 1;
    if t == spec.t1 {
        if out.len() >= cap {
            return Err(Error::TooLarge(format!("path enumeration exceeds cap {cap}")));
        }
        out.push((DiscretePath { t0: spec.t0, values: prefix.clone() }, logw));
        return Ok(());
    }
    let z = *prefix.last().expect("nonempty prefix");
    let (lo, hi) = spec.reachable_range(h, t + 1);
    for (j, _) in h.support() {
        let next = z + j;
        if next < lo || next > hi {
            continue;
        }
        prefix.push(next);
        enumerate_rec(h, spec, prefix, logw + h.log_weight(j), out, cap)?;
        prefix.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RunRng;
    use rand::SeedableRng;

    fn bern() -> Hamiltonian {
        Hamiltonian::bernoulli(0.5).unwrap()
    }

    fn tri() -> Hamiltonian {
        Hamiltonian::from_weights(0, vec![0.25, 0.5, 0.25]).unwrap()
    }

    #[test]
    fn log_partition_counts_binomial_paths() {
        // Symmetric Bernoulli, 4 steps, displacement 2: C(4,2) / 2^4 = 6/16.
        let lp = log_partition(&bern(), 4, 2).unwrap();
        assert!((lp - (6.0f64 / 16.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn log_partition_unreachable_is_neg_inf() {
        let lp = log_partition(&bern(), 3, -1).unwrap();
        assert_eq!(lp, f64::NEG_INFINITY);
        let lp = log_partition(&bern(), 3, 4).unwrap();
        assert_eq!(lp, f64::NEG_INFINITY);
    }

    #[test]
    fn log_partition_two_fold_convolution() {
        // weights (0.25, 0.5, 0.25), 2 steps, displacement 2:
        // 2 * 0.25 * 0.25 + 0.5^2 = 0.375.
        let lp = log_partition(&tri(), 2, 2).unwrap();
        assert!((lp - 0.375f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn step_distribution_enumeration_fixture() {
        // Bernoulli bridge 0 -> 1 over 2 steps at (0, 0): both continuations
        // are equally likely.
        let spec = BridgeSpec::new(0, 2, 0, 1);
        let dist = step_distribution(&bern(), spec, 0, 0).unwrap();
        assert_eq!(dist.len(), 2);
        for (_, p) in &dist {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn step_distribution_forced_increment() {
        let spec = BridgeSpec::new(0, 2, 0, 2);
        let dist = step_distribution(&bern(), spec, 0, 0).unwrap();
        assert_eq!(dist, vec![(1, 1.0)]);
    }

    #[test]
    fn step_distribution_conditional_via_convolution() {
        // weights (0.25,0.5,0.25), 0 -> 2 over 2 steps at (0,0):
        // P(1) = 0.5^2 / 0.375 = 2/3, P(0) = P(2) = 1/6.
        let spec = BridgeSpec::new(0, 2, 0, 2);
        let dist = step_distribution(&tri(), spec, 0, 0).unwrap();
        let lookup = |v: i64| dist.iter().find(|(x, _)| *x == v).unwrap().1;
        assert!((lookup(0) - 1.0 / 6.0).abs() < 1e-12);
        assert!((lookup(1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((lookup(2) - 1.0 / 6.0).abs() < 1e-12);
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_distribution_rejects_unreachable_state() {
        let spec = BridgeSpec::new(0, 4, 0, 4);
        // At time 1 the only reachable value is 1.
        assert!(step_distribution(&bern(), spec, 1, 0).is_err());
    }

    #[test]
    fn sampler_forced_path() {
        let spec = BridgeSpec::new(0, 2, 0, 2);
        let mut rng = RunRng::seed_from_u64(3);
        for _ in 0..10 {
            let path = sample_bridge(&bern(), spec, &mut rng).unwrap();
            assert_eq!(path.values, vec![0, 1, 2]);
        }
    }

    #[test]
    fn sampler_rejects_empty_path_space() {
        let spec = BridgeSpec::new(0, 2, 0, 5);
        let mut rng = RunRng::seed_from_u64(4);
        assert!(sample_bridge(&bern(), spec, &mut rng).is_err());
    }

    #[test]
    fn sampler_midpoint_frequency() {
        // Bernoulli 0 -> 1 over 2 steps: midpoint is 0 or 1 with prob 1/2.
        let spec = BridgeSpec::new(0, 2, 0, 1);
        let sampler = BridgeSampler::new(&bern(), spec).unwrap();
        let mut rng = RunRng::seed_from_u64(5);
        let n = 100_000;
        let mut ones = 0u64;
        for _ in 0..n {
            if sampler.sample(&mut rng).values[1] == 1 {
                ones += 1;
            }
        }
        let freq = ones as f64 / n as f64;
        let se = (0.25f64 / n as f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * se, "freq {freq}");
    }

    #[test]
    fn path_log_weight_uniform_fixture() {
        // Symmetric Bernoulli 0 -> 2 over 4 steps: every admissible path has
        // probability 1 / C(4,2) = 1/6.
        let spec = BridgeSpec::new(0, 4, 0, 2);
        let path = DiscretePath::new(0, vec![0, 1, 1, 2, 2]);
        let lw = path_log_weight(&bern(), spec, &path).unwrap();
        assert!((lw - (1.0f64 / 6.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn path_log_weight_inadmissible_increment() {
        let spec = BridgeSpec::new(0, 2, 0, 2);
        // Increment 3 then -1 is outside a {0,1} support.
        let h = Hamiltonian::from_weights(-1, vec![0.2, 0.3, 0.2, 0.15, 0.15]).unwrap();
        let path = DiscretePath::new(0, vec![0, 3, 2]);
        // Under the wide support this path is fine; under Bernoulli it is not.
        assert!(path_log_weight(&h, spec, &path).unwrap() > f64::NEG_INFINITY);
        assert_eq!(path_log_weight(&bern(), spec, &path).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn path_log_weight_endpoint_mismatch() {
        let spec = BridgeSpec::new(0, 2, 0, 2);
        let path = DiscretePath::new(0, vec![0, 1, 1]);
        assert!(path_log_weight(&bern(), spec, &path).is_err());
    }

    #[test]
    fn weight_over_partition_fixture() {
        // weights (0.25,0.5,0.25), path (0,1,2) under 0 -> 2 over 2 steps:
        // increments (1,1), so probability 0.5*0.5 / 0.375 = 2/3.
        let spec = BridgeSpec::new(0, 2, 0, 2);
        let path = DiscretePath::new(0, vec![0, 1, 2]);
        let lw = path_log_weight(&tri(), spec, &path).unwrap();
        assert!((lw - (2.0f64 / 3.0).ln()).abs() < 1e-12, "lw = {lw}");
    }

    #[test]
    fn enumerated_probabilities_sum_to_one() {
        for (h, spec) in [
            (bern(), BridgeSpec::new(0, 6, 0, 3)),
            (tri(), BridgeSpec::new(-2, 4, 1, 5)),
            (Hamiltonian::geometric(0.5, Some(8)).unwrap(), BridgeSpec::new(0, 4, 0, 6)),
        ] {
            let paths = enumerate_paths(&h, spec, 1_000_000).unwrap();
            let total: f64 = paths
                .iter()
                .map(|(p, _)| path_log_weight(&h, spec, p).unwrap().exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-9, "total {total}");
        }
    }

    #[test]
    fn step_distribution_composes_to_partition_ratios() {
        // Multiplying one-step conditionals along a path reproduces the
        // normalized path weight.
        let h = tri();
        let spec = BridgeSpec::new(0, 5, 0, 4);
        let sampler = BridgeSampler::new(&h, spec).unwrap();
        for (path, _) in enumerate_paths(&h, spec, 100_000).unwrap() {
            let mut log_prob = 0.0;
            for t in 0..spec.steps() {
                let dist = sampler.step_distribution(spec.t0 + t, path.value(spec.t0 + t)).unwrap();
                let next = path.value(spec.t0 + t + 1);
                let p = dist.iter().find(|(v, _)| *v == next).unwrap().1;
                log_prob += p.ln();
            }
            let expect = path_log_weight(&h, spec, &path).unwrap();
            assert!((log_prob - expect).abs() < 1e-9, "{log_prob} vs {expect}");
        }
    }

    #[test]
    fn sampler_matches_enumeration_chi_square() {
        // Chi-square between 1e5 sampled paths and exact path probabilities.
        use std::collections::HashMap;
        let fixtures: Vec<(Hamiltonian, BridgeSpec)> = vec![
            (bern(), BridgeSpec::new(0, 6, 0, 3)),
            (tri(), BridgeSpec::new(0, 5, 0, 4)),
            (Hamiltonian::bernoulli(0.3).unwrap(), BridgeSpec::new(0, 8, 0, 4)),
        ];
        for (fi, (h, spec)) in fixtures.into_iter().enumerate() {
            let paths = enumerate_paths(&h, spec, 1_000_000).unwrap();
            let probs: Vec<f64> = paths
                .iter()
                .map(|(p, _)| path_log_weight(&h, spec, p).unwrap().exp())
                .collect();
            let index: HashMap<Vec<i64>, usize> =
                paths.iter().enumerate().map(|(i, (p, _))| (p.values.clone(), i)).collect();

            let sampler = BridgeSampler::new(&h, spec).unwrap();
            let mut rng = RunRng::seed_from_u64(100 + fi as u64);
            let n = 100_000usize;
            let mut counts = vec![0u64; paths.len()];
            for _ in 0..n {
                let s = sampler.sample(&mut rng);
                counts[index[&s.values]] += 1;
            }
            let report = crate::stattest::chi_square_gof(&counts, &probs).unwrap();
            assert!(report.p_value > 0.001, "fixture {fi}: chi2 p = {}", report.p_value);
        }
    }
}
