//! Zipf-skewed word selection for the benchmark workload.
//!
//! Rank `k` out of `n` is drawn with probability
//! `(1/k^alpha) / sum_{m=1..n} 1/m^alpha` via inverse-CDF lookup, and ranks
//! are mapped to word indices through a fixed seeded permutation so hot
//! ranks are scattered across blocks rather than physically adjacent.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::WordAddress;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderPolicy {
    /// Targets sorted by word index.
    Index,
    /// Hottest (lowest-rank) word first; the rest follow by rank.
    ContendedFirst,
}

#[derive(Debug, Clone)]
pub struct ZipfSampler {
    alpha: f64,
    cdf: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(alpha: f64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("zipf population must be nonzero".into()));
        }
        if !(alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be >= 0, got {alpha}")));
        }
        let mut cdf = Vec::with_capacity(n as usize);
        let mut acc = 0.0f64;
        for k in 1..=n {
            acc += (k as f64).powf(-alpha);
            cdf.push(acc);
        }
        let total = acc;
        for v in &mut cdf {
            *v /= total;
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(ZipfSampler { alpha, cdf })
    }

    pub fn population(&self) -> u64 {
        self.cdf.len() as u64
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Exact probability of drawing `rank` (1-based).
    pub fn probability(&self, rank: u64) -> f64 {
        let i = (rank - 1) as usize;
        if i == 0 {
            self.cdf[0]
        } else {
            self.cdf[i] - self.cdf[i - 1]
        }
    }

    /// Inverse CDF: the smallest rank whose cumulative probability exceeds
    /// `u`. Returns a 1-based rank.
    pub fn sample_with(&self, u: f64) -> u64 {
        debug_assert!((0.0..1.0).contains(&u));
        self.cdf.partition_point(|&c| c <= u) as u64 + 1
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        self.sample_with(rng.random::<f64>())
    }
}

/// Maps Zipf ranks to scattered word indices and draws distinct target
/// sets.
#[derive(Debug, Clone)]
pub struct WordPicker {
    sampler: ZipfSampler,
    rank_to_index: Vec<u64>,
    index_to_rank: Vec<u64>,
}

impl WordPicker {
    pub fn new(alpha: f64, word_count: u64, perm_seed: u64) -> Result<Self> {
        let sampler = ZipfSampler::new(alpha, word_count)?;
        let mut rank_to_index: Vec<u64> = (0..word_count).collect();
        let mut rng = StdRng::seed_from_u64(perm_seed);
        rank_to_index.shuffle(&mut rng);
        let mut index_to_rank = vec![0u64; word_count as usize];
        for (r, &idx) in rank_to_index.iter().enumerate() {
            index_to_rank[idx as usize] = r as u64 + 1;
        }
        Ok(WordPicker {
            sampler,
            rank_to_index,
            index_to_rank,
        })
    }

    pub fn sampler(&self) -> &ZipfSampler {
        &self.sampler
    }

    pub fn index_for_rank(&self, rank: u64) -> WordAddress {
        WordAddress(self.rank_to_index[(rank - 1) as usize])
    }

    pub fn rank_of(&self, addr: WordAddress) -> u64 {
        self.index_to_rank[addr.0 as usize]
    }

    pub fn sample_word<R: Rng>(&self, rng: &mut R) -> WordAddress {
        self.index_for_rank(self.sampler.sample(rng))
    }

    /// Draws `k` distinct word addresses (duplicates are resampled) and
    /// orders them per `order`.
    pub fn draw_targets<R: Rng>(
        &self,
        rng: &mut R,
        k: usize,
        order: OrderPolicy,
    ) -> Vec<WordAddress> {
        debug_assert!(k as u64 <= self.sampler.population());
        let mut picked: Vec<WordAddress> = Vec::with_capacity(k);
        while picked.len() < k {
            let w = self.sample_word(rng);
            if !picked.contains(&w) {
                picked.push(w);
            }
        }
        match order {
            OrderPolicy::Index => picked.sort_unstable(),
            OrderPolicy::ContendedFirst => {
                picked.sort_unstable_by_key(|w| self.rank_of(*w));
            }
        }
        picked
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn alpha_zero_is_uniform() {
        let s = ZipfSampler::new(0.0, 10).unwrap();
        for k in 1..=10 {
            assert!((s.probability(k) - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_one_population_three() {
        // harmonic sum 1 + 1/2 + 1/3 = 11/6; Pr(rank 1) = 6/11
        let s = ZipfSampler::new(1.0, 3).unwrap();
        assert!((s.probability(1) - 6.0 / 11.0).abs() < 1e-12);
        assert!((s.probability(2) - 3.0 / 11.0).abs() < 1e-12);
        assert!((s.probability(3) - 2.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn u_zero_gives_rank_one() {
        for alpha in [0.0, 0.5, 1.0, 2.0] {
            let s = ZipfSampler::new(alpha, 100).unwrap();
            assert_eq!(s.sample_with(0.0), 1);
        }
    }

    #[test]
    fn sample_matches_cdf_boundaries() {
        let s = ZipfSampler::new(1.0, 3).unwrap();
        let p1 = 6.0 / 11.0;
        let p2 = 3.0 / 11.0;
        assert_eq!(s.sample_with(p1 - 1e-9), 1);
        assert_eq!(s.sample_with(p1 + 1e-9), 2);
        assert_eq!(s.sample_with(p1 + p2 + 1e-9), 3);
        assert_eq!(s.sample_with(1.0 - 1e-12), 3);
    }

    #[test]
    fn draw_k_equals_population_covers_all() {
        let picker = WordPicker::new(0.0, 3, 7).unwrap();
        let mut rng = StdRng::seed_from_u64(1);
        let mut ws = picker.draw_targets(&mut rng, 3, OrderPolicy::Index);
        ws.sort_unstable();
        assert_eq!(ws, vec![WordAddress(0), WordAddress(1), WordAddress(2)]);
    }

    #[test]
    fn order_policies_agree_on_set_disagree_on_order() {
        let picker = WordPicker::new(1.0, 64, 42).unwrap();
        let mut r1 = StdRng::seed_from_u64(9);
        let mut r2 = StdRng::seed_from_u64(9);
        let by_index = picker.draw_targets(&mut r1, 4, OrderPolicy::Index);
        let by_rank = picker.draw_targets(&mut r2, 4, OrderPolicy::ContendedFirst);
        let mut a = by_index.clone();
        let mut b = by_rank.clone();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
        // contended-first places the hottest word first
        let hottest = by_rank
            .iter()
            .copied()
            .min_by_key(|w| picker.rank_of(*w))
            .unwrap();
        assert_eq!(by_rank[0], hottest);
        // ranks ascend
        for pair in by_rank.windows(2) {
            assert!(picker.rank_of(pair[0]) < picker.rank_of(pair[1]));
        }
    }

    #[test]
    fn permutation_is_seed_stable() {
        let a = WordPicker::new(1.0, 100, 5).unwrap();
        let b = WordPicker::new(1.0, 100, 5).unwrap();
        assert_eq!(a.rank_to_index, b.rank_to_index);
    }
}
