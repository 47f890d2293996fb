//! Counter-derived random streams.
//!
//! Each Monte Carlo trial gets its own generator keyed by
//! `(seed, tag, grid point, trial)`, so results never depend on which
//! worker ran the trial or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::numerics::C64;

pub type TrialRng = ChaCha8Rng;

pub fn stream(seed: u64, tag: &str, grid_point: u64, trial: u64) -> TrialRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((tag.len() as u64).to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(grid_point.to_le_bytes());
    hasher.update(trial.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Circularly-symmetric complex normal sample with `E|z|^2 = variance`.
pub fn complex_normal(rng: &mut impl Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

pub fn complex_normal_vec(rng: &mut impl Rng, len: usize, variance: f64) -> Vec<C64> {
    (0..len).map(|_| complex_normal(rng, variance)).collect()
}
