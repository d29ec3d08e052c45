//! Seeded random streams.
//!
//! Every random draw in the crate comes from a stream derived from one root
//! seed and a path-like name (`"sample/7"`, `"train"`), so parallel work
//! never shares or collides on a stream and reruns are bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn stream(&self, name: &str) -> StreamRng {
        let mut h = Sha256::new();
        h.update(self.root.to_le_bytes());
        h.update(name.as_bytes());
        StreamRng::from_seed(h.finalize().into())
    }

    pub fn indexed(&self, name: &str, index: u64) -> StreamRng {
        self.stream(&format!("{name}/{index}"))
    }
}

/// One uniform draw in `[0, 1)`.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Inverse-CDF categorical draw from (possibly unnormalized) nonnegative
/// weights using a single uniform `u`. Never selects a zero-weight entry.
pub fn categorical_from_uniform(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_positive = i;
        if target < acc {
            return i;
        }
    }
    // rounding left target at the very top of the cumulative sum
    last_positive
}
