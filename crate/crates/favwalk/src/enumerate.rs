//! Exhaustive enumeration of all `(2d)^n` walks of a given short length:
//! the exact distribution of the favorite-set size and the exact mean of
//! the maximal local time. Serves as the brute-force oracle for the
//! simulation side.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Hard budget on the number of enumerated paths.
pub const ENUMERATION_BUDGET: u64 = 100_000_000;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactDistribution {
    pub dimension: u32,
    pub n: u64,
    pub total_paths: u64,
    /// favorite-set size -> number of paths
    pub k_counts: BTreeMap<u64, u64>,
    /// exact E[max local time]
    pub mean_max: f64,
}

impl ExactDistribution {
    pub fn probability(&self, k: u64) -> f64 {
        *self.k_counts.get(&k).unwrap_or(&0) as f64 / self.total_paths as f64
    }
}

struct Enumerator {
    counts: Vec<u16>,
    strides: Vec<isize>,
    count_of_count: Vec<u64>,
    k_counts: BTreeMap<u64, u64>,
    sum_max: u64,
    depth_limit: u32,
}

impl Enumerator {
    #[inline]
    fn bump(&mut self, idx: usize) -> u16 {
        let c = self.counts[idx];
        if c > 0 {
            self.count_of_count[c as usize] -= 1;
        }
        self.counts[idx] = c + 1;
        self.count_of_count[c as usize + 1] += 1;
        c + 1
    }

    #[inline]
    fn unbump(&mut self, idx: usize) {
        let c = self.counts[idx];
        self.count_of_count[c as usize] -= 1;
        self.counts[idx] = c - 1;
        if c > 1 {
            self.count_of_count[c as usize - 1] += 1;
        }
    }

    fn descend(&mut self, depth: u32, idx: usize, max: u16) {
        if depth == self.depth_limit {
            *self.k_counts.entry(self.count_of_count[max as usize]).or_insert(0) += 1;
            self.sum_max += max as u64;
            return;
        }
        for a in 0..self.strides.len() {
            let s = self.strides[a];
            for delta in [s, -s] {
                let nidx = (idx as isize + delta) as usize;
                let c = self.bump(nidx);
                self.descend(depth + 1, nidx, max.max(c));
                self.unbump(nidx);
            }
        }
    }
}

/// Enumerates every walk of length `n` in `Z^d` exactly.
pub fn enumerate_exact_distribution(dimension: u32, n: u64) -> Result<ExactDistribution> {
    if dimension == 0 || dimension > crate::lattice::MAX_DIMENSION {
        return Err(Error::BadDimension(dimension));
    }
    let states = (2 * dimension as u64)
        .checked_pow(n.try_into().map_err(|_| Error::EnumerationTooLarge {
            states: u64::MAX,
            budget: ENUMERATION_BUDGET,
        })?)
        .unwrap_or(u64::MAX);
    if states > ENUMERATION_BUDGET {
        return Err(Error::EnumerationTooLarge {
            states,
            budget: ENUMERATION_BUDGET,
        });
    }

    let d = dimension as usize;
    let side = 2 * n as usize + 1;
    let mut strides = vec![0isize; d];
    let mut size = 1usize;
    for a in 0..d {
        strides[a] = size as isize;
        size *= side;
    }
    let center: usize = strides.iter().map(|&s| s as usize * n as usize).sum();

    let mut e = Enumerator {
        counts: vec![0u16; size],
        strides,
        count_of_count: vec![0u64; n as usize + 2],
        k_counts: BTreeMap::new(),
        sum_max: 0,
        depth_limit: n as u32,
    };
    let c0 = e.bump(center);
    e.descend(0, center, c0);

    let total: u64 = e.k_counts.values().sum();
    debug_assert_eq!(total, states);
    Ok(ExactDistribution {
        dimension,
        n,
        total_paths: total,
        mean_max: e.sum_max as f64 / total as f64,
        k_counts: e.k_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local_time::MaxTracker;
    use crate::rng::{rng_from_seed, trial_seed, DirectionSampler};

    #[test]
    fn one_step_two_favorites() {
        let dist = enumerate_exact_distribution(2, 1).unwrap();
        assert_eq!(dist.total_paths, 4);
        assert_eq!(dist.probability(2), 1.0);
        assert_eq!(dist.mean_max, 1.0);
    }

    #[test]
    fn two_steps_one_dim() {
        let dist = enumerate_exact_distribution(1, 2).unwrap();
        assert_eq!(dist.total_paths, 4);
        assert_eq!(dist.probability(3), 0.5);
        assert_eq!(dist.probability(1), 0.5);
        assert_eq!(dist.mean_max, 1.5);
    }

    #[test]
    fn distribution_sums_to_one() {
        for (d, n) in [(1, 10), (2, 7), (3, 5)] {
            let dist = enumerate_exact_distribution(d, n).unwrap();
            let total: u64 = dist.k_counts.values().sum();
            assert_eq!(total, dist.total_paths);
            assert_eq!(dist.total_paths, (2 * d as u64).pow(n as u32));
        }
    }

    #[test]
    fn cap_enforced() {
        assert!(matches!(
            enumerate_exact_distribution(2, 20),
            Err(Error::EnumerationTooLarge { .. })
        ));
        assert!(enumerate_exact_distribution(1, 80).is_err());
    }

    #[test]
    fn monte_carlo_agrees_on_small_case() {
        let n = 6u64;
        let dist = enumerate_exact_distribution(2, n).unwrap();
        let trials = 40_000u64;
        let mut freq: BTreeMap<u64, u64> = BTreeMap::new();
        for i in 0..trials {
            let mut rng = rng_from_seed(trial_seed(0xfeed, i));
            let mut dirs = DirectionSampler::new(2);
            let mut tracker = MaxTracker::new();
            let mut pos = [0i64; 2];
            tracker.observe(&pos);
            for _ in 0..n {
                let dir = dirs.next(&mut rng);
                pos[(dir >> 1) as usize] += 1 - 2 * (dir & 1) as i64;
                tracker.observe(&pos);
            }
            *freq.entry(tracker.favorite_count()).or_insert(0) += 1;
        }
        for (&k, &c) in &freq {
            let p = dist.probability(k);
            assert!(p > 0.0, "observed favorite count {k} impossible per enumeration");
            let expect = p * trials as f64;
            let sd = (trials as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (c as f64 - expect).abs() < 5.0 * sd + 1.0,
                "k={k}: observed {c}, expected {expect:.1} (sd {sd:.1})"
            );
        }
    }
}
