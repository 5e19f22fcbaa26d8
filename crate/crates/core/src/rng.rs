//! Reproducible random streams.
//!
//! Every stochastic piece of the pipeline draws from a `ChaCha8` stream
//! keyed by a `u64` seed, with standard normals produced by the
//! Box-Muller transform below. Both choices are frozen: the same seed
//! yields the same draws on every platform and in every release, which
//! is what makes Monte-Carlo runs replayable.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Stream of i.i.d. standard-normal `f64`s from a fixed seed.
pub struct NormalSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalSource {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform draw on (0, 1]; the open lower end keeps `ln` finite.
    fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * TWO_NEG_53
    }

    /// Uniform draw on [0, 1).
    fn uniform_half_open(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * TWO_NEG_53
    }

    /// Next standard-normal draw (Box-Muller, pair cached).
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let r = (-2.0 * self.uniform_open().ln()).sqrt();
        let theta = std::f64::consts::TAU * self.uniform_half_open();
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Derive a child seed from a base seed and a context path.
///
/// Splitmix64 folding; used to give every (day, fold, trial, ...) its
/// own independent stream without coordinating counters.
pub fn mix_seed(base: u64, path: &[u64]) -> u64 {
    let mut state = base;
    let mut out = splitmix64(&mut state);
    for &word in path {
        state ^= word.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        out = splitmix64(&mut state);
    }
    out
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
