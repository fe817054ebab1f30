use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

/// Exponent applied to unigram counts when drawing noise words.
pub const UNIGRAM_POWER: f64 = 0.75;

/// Draws ids with probability proportional to `count^0.75`.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    dist: WeightedIndex<f64>,
}

impl NegativeSampler {
    /// `None` when every count is zero.
    pub fn new(counts: &[u64]) -> Option<Self> {
        let weights = counts.iter().map(|&c| (c as f64).powf(UNIGRAM_POWER));
        WeightedIndex::new(weights).ok().map(|dist| Self { dist })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.dist.sample(rng) as u32
    }

    /// Fills `out` with `k` noise ids, dropping any draw equal to `target`.
    ///
    /// With a single-word vocabulary every draw equals the target, so the
    /// example trains on its positive term alone.
    pub fn fill_negatives<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        target: u32,
        k: usize,
        out: &mut Vec<u32>,
    ) {
        out.clear();
        for _ in 0..k {
            let id = self.sample(rng);
            if id != target {
                out.push(id);
            }
        }
    }
}

/// Convenience wrapper: one draw from `counts^0.75`.
pub fn negative_sample<R: Rng + ?Sized>(counts: &[u64], rng: &mut R) -> Option<u32> {
    NegativeSampler::new(counts).map(|s| s.sample(rng))
}
