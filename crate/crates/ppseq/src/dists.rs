//! Random draw helpers used by both the forward simulator and the sampler,
//! plus the RNG seed-splitting rule for shards and replicate chains.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};

/// Gamma draw parameterized by shape and *rate*.
pub fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters must be positive")
        .sample(rng)
}

pub fn draw_normal<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> f64 {
    Normal::new(mean, var.sqrt())
        .expect("variance must be positive")
        .sample(rng)
}

pub fn draw_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("poisson mean must be finite").sample(rng) as usize
}

/// Symmetric or general Dirichlet draw via normalized gamma variates.
pub fn draw_dirichlet<R: Rng + ?Sized>(conc: &[f64], rng: &mut R) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = conc.iter().map(|&a| draw_gamma(a, 1.0, rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return draws.into_iter().map(|g| g / total).collect();
        }
        // All draws underflowed to zero (tiny concentrations); retry.
    }
}

/// Scaled inverse-chi-squared draw: `nu * s2 / ChiSq(nu)`.
pub fn draw_scaled_inv_chi2<R: Rng + ?Sized>(nu: f64, s2: f64, rng: &mut R) -> f64 {
    let chi2 = Gamma::new(nu / 2.0, 2.0)
        .expect("degrees of freedom must be positive")
        .sample(rng);
    nu * s2 / chi2
}

/// Categorical draw from linear-space probabilities.
pub fn draw_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Deterministic per-shard RNG derived from a master seed. Shard `j` of a
/// `P`-way split gets `ChaCha8(splitmix64(seed ^ splitmix64(j + 1)))`;
/// results are reproducible for fixed `(seed, P)`.
pub fn shard_rng(master_seed: u64, shard: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(master_seed ^ splitmix64(shard as u64 + 1)))
}

/// Coordinator RNG for the gather/broadcast step, independent of all shards.
pub fn coordinator_rng(master_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(master_seed ^ 0xD1B54A32D192ED03))
}
