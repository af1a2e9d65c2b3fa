//! Deterministic random streams.
//!
//! All randomness flows from a 64-bit seed through `ChaCha8Rng`. Independent
//! sub-experiments (trials, noise vs. state generation) use distinct stream
//! ids on the same key so their draws never overlap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

pub type Rng64 = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Well-mixed 64-bit seed derived from a master seed and a label (splitmix64).
pub fn derive_seed(master: u64, label: u64) -> u64 {
    let mut z = master ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One Poisson draw; non-positive or non-finite means yield zero.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    if !(mean > 0.0) || !mean.is_finite() {
        return 0.0;
    }
    Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(0.0)
}
