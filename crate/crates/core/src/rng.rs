//! Seed plumbing.
//!
//! Every random stream in the workbench is derived from a small integer seed
//! through [`mix`] so that results never depend on scheduling order. The
//! defense noise is counter-based: the value for element `i` of query `q` is a
//! pure function of `(seed, q, i)`.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// The generator used for all seeded streams.
pub type Rng = Xoshiro256PlusPlus;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of words into one 64-bit seed.
///
/// `mix(&[a, b, c]) = splitmix64(splitmix64(splitmix64(a) ^ b) ^ c)`. The
/// harness derives per-run seeds as `mix(&[master, defense_idx, attack_idx,
/// sample_idx])`.
pub fn mix(words: &[u64]) -> u64 {
    let mut iter = words.iter();
    let mut h = splitmix64(iter.next().copied().unwrap_or(0));
    for &w in iter {
        h = splitmix64(h ^ w);
    }
    h
}

pub fn rng_from(words: &[u64]) -> Rng {
    Rng::seed_from_u64(mix(words))
}

/// Maps a 64-bit word to a uniform in the open interval (0, 1).
#[inline]
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal deviate for element `index` of query `query` under `seed`.
///
/// Box-Muller on two uniforms hashed from the triple; only the cosine branch
/// is used so every element is an independent function of its counter.
pub fn counter_normal(seed: u64, query: u64, index: u64) -> f64 {
    let base = mix(&[seed, query, index]);
    let u1 = unit_open(splitmix64(base));
    let u2 = unit_open(splitmix64(base ^ 0xD1B5_4A32_D192_ED03));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_is_order_sensitive() {
        assert_ne!(mix(&[1, 2, 3]), mix(&[1, 3, 2]));
        assert_eq!(mix(&[7, 0, 0, 4]), mix(&[7, 0, 0, 4]));
    }

    #[test]
    fn counter_normal_moments() {
        let n = 200_000u64;
        let xs: Vec<f64> = (0..n).map(|q| counter_normal(11, q, 3)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }
}
