//! Seeded RNG streams. Every stochastic step derives its own stream from the
//! run seed plus a label, so per-scan work is order-independent and
//! reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Derive an independent stream from `seed` and a label (FNV-1a mix).
pub fn stream(seed: u64, label: &str, index: u64) -> Rng {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^= index;
    h = h.wrapping_mul(0x100000001b3);
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

pub fn root(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw via Box-Muller (keeps the byte stream stable across
/// dependency versions).
pub fn normal(rng: &mut impl rand_chacha::rand_core::RngCore) -> f64 {
    let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
    let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
