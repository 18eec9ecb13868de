//! Seeded random streams.
//!
//! Every stochastic operation draws from a ChaCha20 stream keyed by a 64-bit
//! seed. Sub-streams (per item, per frame, per channel, per sweep instance) are
//! derived by hashing the parent seed with a label, so the same inputs give the
//! same bytes regardless of scheduling order.
//!
//! Float conversions are done here instead of through `rand::distributions`
//! so the output does not shift when that crate changes its sampling code.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Identifier written into config files so generated noise can be tied to the
/// generator that produced it.
pub const RNG_VERSION: &str = "chacha20-v1";

/// Derive a child seed from a parent seed and an ordered list of labels.
pub fn derive_seed(parent: u64, labels: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"vna-seed");
    hasher.update(parent.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Convenience wrapper for the common `(seed, name, index)` derivation.
pub fn derive_indexed(parent: u64, name: &str, index: u64) -> u64 {
    derive_seed(parent, &[name.as_bytes(), &index.to_le_bytes()])
}

pub struct SeededRng {
    inner: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`; `n` must be nonzero. Uses rejection to
    /// stay unbiased.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            return false;
        }
        if p >= 1.0 {
            return true;
        }
        self.uniform() < p
    }

    /// Standard normal via the polar Box-Muller method.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * m);
                return u * m;
            }
        }
    }
}
