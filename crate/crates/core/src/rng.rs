//! Seed schedule and Gaussian source shared by all samplers.
//!
//! Every sampler in this crate takes `&mut impl Rng`, and reproducible runs
//! seed one [`RunRng`] per replica through [`derive_seed`]. The derivation is
//! a fixed function of (master seed, replica index) only, so results do not
//! depend on how replicas are scheduled across worker threads.

use rand::Rng;

/// The concrete RNG used for seeded runs.
pub type RunRng = rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer (Steele, Lea, Flood 2014). Stable across releases:
/// manifests record seeds whose expansion must never change.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-replica seed: `splitmix64(splitmix64(master) + replica)`.
pub fn derive_seed(master_seed: u64, replica_index: u64) -> u64 {
    splitmix64(splitmix64(master_seed).wrapping_add(replica_index))
}

/// Construct the replica RNG for a given master seed and replica index.
pub fn replica_rng(master_seed: u64, replica_index: u64) -> RunRng {
    use rand::SeedableRng;
    RunRng::seed_from_u64(derive_seed(master_seed, replica_index))
}

/// One standard normal variate via the Marsaglia polar method.
///
/// The method consumes a variable but seed-determined number of uniforms; the
/// second variate of each accepted pair is discarded so that consecutive
/// calls stay independent regardless of call sites interleaving.
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = 2.0 * rng.random::<f64>() - 1.0;
        let v: f64 = 2.0 * rng.random::<f64>() - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// Fill a slice with standard normal variates (polar method, pairs used).
pub fn fill_std_normals<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut i = 0;
    while i < out.len() {
        let (a, b) = loop {
            let u: f64 = 2.0 * rng.random::<f64>() - 1.0;
            let v: f64 = 2.0 * rng.random::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                break (u * m, v * m);
            }
        };
        out[i] = a;
        i += 1;
        if i < out.len() {
            out[i] = b;
            i += 1;
        }
    }
}
