use std::collections::BTreeSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded generator behind every random choice the pruner makes.
///
/// ChaCha8 seeded through `seed_from_u64` produces the same stream on every
/// platform, so a seed fully determines a pruning run.
#[derive(Debug, Clone)]
pub struct PruneRng {
    inner: ChaCha8Rng,
}

impl PruneRng {
    pub fn new(seed: u64) -> Self {
        Self { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Uniform draw in [0, 1).
    pub fn unit(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// `amount` distinct indices from `0..length`, ascending.
    pub fn distinct_indices(&mut self, length: usize, amount: usize) -> BTreeSet<usize> {
        index::sample(&mut self.inner, length, amount).into_iter().collect()
    }
}
