//! Local-time fields: visit counts, their maximum, and the favorite set.

use crate::hash::FxHashMap;
use crate::lattice::LatticePoint;
use crate::walk::WalkRecord;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Visit counts of a walk prefix, counting the time-0 visit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalTimeField {
    pub counts: FxHashMap<LatticePoint, u64>,
    /// Prefix length n; counts sum to n + 1.
    pub time: u64,
    /// The maximal local time.
    pub max_value: u64,
    /// All sites attaining the maximum, sorted for determinism.
    pub argmax_set: Vec<LatticePoint>,
}

impl LocalTimeField {
    pub fn count(&self, x: &LatticePoint) -> u64 {
        self.counts.get(x).copied().unwrap_or(0)
    }

    /// Number of favorite sites.
    pub fn argmax_size(&self) -> usize {
        self.argmax_set.len()
    }

    pub fn check_invariants(&self) -> Result<()> {
        let total: u64 = self.counts.values().sum();
        if total != self.time + 1 {
            return Err(Error::Invariant(format!(
                "visit conservation: {total} != {}",
                self.time + 1
            )));
        }
        let max = self.counts.values().copied().max().unwrap_or(0);
        if max != self.max_value {
            return Err(Error::Invariant("max_value inconsistent".into()));
        }
        let mut argmax: Vec<_> = self
            .counts
            .iter()
            .filter(|(_, &c)| c == max)
            .map(|(p, _)| p.clone())
            .collect();
        argmax.sort();
        if argmax != self.argmax_set {
            return Err(Error::Invariant("argmax_set inconsistent".into()));
        }
        if self.argmax_set.is_empty() {
            return Err(Error::Invariant("argmax_set empty".into()));
        }
        Ok(())
    }
}

/// Exact local times of `walk` at prefix length `n`.
pub fn local_time_profile(walk: &WalkRecord, n: u64) -> Result<LocalTimeField> {
    if n > walk.length {
        return Err(Error::invalid("n", format!("{n} > walk length {}", walk.length)));
    }
    let d = walk.dimension as usize;
    let mut counts: FxHashMap<LatticePoint, u64> = FxHashMap::default();
    for p in walk.points()?.take(n as usize + 1) {
        *counts.entry(LatticePoint(p.to_vec())).or_insert(0) += 1;
    }
    let max_value = counts.values().copied().max().unwrap_or(0);
    let mut argmax_set: Vec<LatticePoint> = counts
        .iter()
        .filter(|(_, &c)| c == max_value)
        .map(|(p, _)| p.clone())
        .collect();
    argmax_set.sort();
    debug_assert_eq!(argmax_set[0].dimension() as usize, d);
    Ok(LocalTimeField {
        counts,
        time: n,
        max_value,
        argmax_set,
    })
}

/// Incremental tracker for the maximal local time and favorite count,
/// fed one position at a time.
#[derive(Clone, Debug, Default)]
pub struct MaxTracker {
    counts: FxHashMap<Vec<i64>, u64>,
    max: u64,
    at_max: u64,
}

impl MaxTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, pos: &[i64]) {
        let c = self.counts.entry(pos.to_vec()).or_insert(0);
        *c += 1;
        if *c > self.max {
            self.max = *c;
            self.at_max = 1;
        } else if *c == self.max {
            self.at_max += 1;
        }
    }

    pub fn max(&self) -> u64 {
        self.max
    }

    pub fn favorite_count(&self) -> u64 {
        self.at_max
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{simulate_walk, StopRule};

    fn hand_walk(coords: &[[i64; 2]]) -> WalkRecord {
        WalkRecord {
            dimension: 2,
            seed: 0,
            length: coords.len() as u64 - 1,
            start: LatticePoint(coords[0].to_vec()),
            end: LatticePoint(coords[coords.len() - 1].to_vec()),
            path: Some(coords.iter().flatten().copied().collect()),
            stop_rule: StopRule::FixedSteps,
            stop_satisfied: true,
        }
    }

    #[test]
    fn single_point_at_time_zero() {
        let w = simulate_walk(2, 10, 5, StopRule::FixedSteps).unwrap();
        let f = local_time_profile(&w, 0).unwrap();
        assert_eq!(f.counts.len(), 1);
        assert_eq!(f.count(&LatticePoint::origin(2)), 1);
        assert_eq!(f.max_value, 1);
        assert_eq!(f.argmax_set, vec![LatticePoint::origin(2)]);
    }

    #[test]
    fn hand_counted_profile() {
        // 0 -> e1 -> 0
        let w = hand_walk(&[[0, 0], [1, 0], [0, 0]]);
        let f = local_time_profile(&w, 2).unwrap();
        assert_eq!(f.count(&LatticePoint(vec![0, 0])), 2);
        assert_eq!(f.count(&LatticePoint(vec![1, 0])), 1);
        assert_eq!(f.max_value, 2);
        assert_eq!(f.argmax_set, vec![LatticePoint(vec![0, 0])]);
        f.check_invariants().unwrap();
    }

    #[test]
    fn visit_conservation_large() {
        let w = simulate_walk(2, 100_000, 11, StopRule::FixedSteps).unwrap();
        let f = local_time_profile(&w, 100_000).unwrap();
        let total: u64 = f.counts.values().sum();
        assert_eq!(total, 100_001);
        f.check_invariants().unwrap();
    }

    #[test]
    fn tracker_matches_profile() {
        let w = simulate_walk(2, 5000, 17, StopRule::FixedSteps).unwrap();
        let mut tracker = MaxTracker::new();
        for (t, p) in w.points().unwrap().enumerate() {
            tracker.observe(p);
            if t % 611 == 0 {
                let f = local_time_profile(&w, t as u64).unwrap();
                assert_eq!(tracker.max(), f.max_value);
                assert_eq!(tracker.favorite_count() as usize, f.argmax_set.len());
            }
        }
    }

    #[test]
    fn out_of_range_rejected() {
        let w = simulate_walk(2, 10, 5, StopRule::FixedSteps).unwrap();
        assert!(local_time_profile(&w, 11).is_err());
    }
}
