//! Split of 2D local time into an external part carried by the jump chain
//! and a lazy part carried by two-step horizontal excursions, in both the
//! even-anchored and odd-anchored versions.

use crate::hash::FxHashMap;
use crate::lattice::{pack2, unpack2, LatticePoint};
use crate::walk::WalkRecord;
use crate::{Error, Result};

/// Decomposition of a 2D walk prefix at a fixed horizon n.
///
/// `excursions` holds the times k with S_{k-2} = S_{k-1} - e1 = S_k (k
/// even, the unprimed family); `excursions_primed` the odd mirror with
/// S_{k-1} = S_k + e1. Removing index pairs {k-1, k} yields the jump
/// chain; `clock[t]` is its running length minus one, and `jump_index`
/// maps jump-chain time back to original time. When the step after n
/// opens a new excursion its first half is already lazy at horizon n;
/// that is only detectable when the record extends past n, and the flag
/// is taken as false at the record's end.
pub struct DecompositionView {
    pub n: u64,
    pub trailing: bool,
    pub trailing_primed: bool,
    pub excursions: Vec<u64>,
    pub excursions_primed: Vec<u64>,
    pub clock: Vec<u64>,
    pub clock_primed: Vec<u64>,
    pub jump_index: Vec<u64>,
    pub jump_index_primed: Vec<u64>,
    xi_tilde: FxHashMap<u64, u64>,
    xi_tilde_primed: FxHashMap<u64, u64>,
    xi_lazy: FxHashMap<u64, u64>,
    xi_lazy_primed: FxHashMap<u64, u64>,
    holding: FxHashMap<(u64, u64), u64>,
}

struct Flat<'a> {
    coords: &'a [i64],
    len: u64,
}

impl<'a> Flat<'a> {
    fn pt(&self, t: u64) -> (i64, i64) {
        let i = (t as usize) * 2;
        (self.coords[i], self.coords[i + 1])
    }

    /// Membership of k in the excursion family of the given parity:
    /// sign +1 selects the even family (middle point at base + e1),
    /// sign -1 the odd family (middle point at base - e1).
    fn in_family(&self, k: u64, sign: i64) -> bool {
        if k < 2 || k > self.len || (k % 2 == 0) != (sign > 0) {
            return false;
        }
        let base = self.pt(k - 2);
        let mid = self.pt(k - 1);
        let top = self.pt(k);
        base == top && mid == (base.0 + sign, base.1)
    }
}

struct Side {
    sign: i64,
    excursions: Vec<u64>,
    clock: Vec<u64>,
    jump_index: Vec<u64>,
    xi_tilde: FxHashMap<u64, u64>,
    xi_lazy: FxHashMap<u64, u64>,
    holding: FxHashMap<(u64, u64), u64>,
    trailing: bool,
}

fn build_side(flat: &Flat, n: u64, sign: i64) -> Side {
    let mut side = Side {
        sign,
        excursions: Vec::new(),
        clock: Vec::with_capacity(n as usize + 1),
        jump_index: Vec::new(),
        xi_tilde: FxHashMap::default(),
        xi_lazy: FxHashMap::default(),
        holding: FxHashMap::default(),
        trailing: flat.in_family(n + 1, sign),
    };
    for k in 2..=n {
        if flat.in_family(k, sign) {
            side.excursions.push(k);
        }
    }
    let mut exc_iter = side.excursions.iter().peekable();
    let mut pending_removed: Option<(u64, u64)> = None;
    for t in 0..=n {
        while let Some(&&k) = exc_iter.peek() {
            if k <= t + 1 {
                pending_removed = Some((k - 1, k));
                exc_iter.next();
            } else {
                break;
            }
        }
        let is_removed = match pending_removed {
            Some((a, b)) => t == a || t == b,
            None => false,
        } || (side.trailing && t == n);
        let (x, y) = flat.pt(t);
        let key = pack2(x, y);
        if is_removed {
            *side.xi_lazy.entry(key).or_insert(0) += 1;
        } else {
            let l = {
                let c = side.xi_tilde.entry(key).or_insert(0);
                *c += 1;
                *c
            };
            side.jump_index.push(t);
            // Count the run of consecutive excursions opening at t + 2.
            let mut r = 0u64;
            let mut s = t + 2;
            while s <= n && flat.in_family(s, sign) {
                r += 1;
                s += 2;
            }
            if r > 0 {
                side.holding.insert((key, l), r);
            }
        }
        side.clock.push(side.jump_index.len() as u64 - 1);
    }
    side
}

impl DecompositionView {
    fn get(map: &FxHashMap<u64, u64>, x: &LatticePoint) -> u64 {
        let c = x.coords();
        map.get(&pack2(c[0], c[1])).copied().unwrap_or(0)
    }

    pub fn xi_tilde(&self, x: &LatticePoint) -> u64 {
        Self::get(&self.xi_tilde, x)
    }

    pub fn xi_tilde_primed(&self, x: &LatticePoint) -> u64 {
        Self::get(&self.xi_tilde_primed, x)
    }

    pub fn xi_lazy(&self, x: &LatticePoint) -> u64 {
        Self::get(&self.xi_lazy, x)
    }

    pub fn xi_lazy_primed(&self, x: &LatticePoint) -> u64 {
        Self::get(&self.xi_lazy_primed, x)
    }

    /// Number of two-step excursions taken right after the l-th
    /// jump-chain visit to x (unprimed side); zero when none.
    pub fn holding(&self, x: &LatticePoint, l: u64) -> u64 {
        let c = x.coords();
        self.holding
            .get(&(pack2(c[0], c[1]), l))
            .copied()
            .unwrap_or(0)
    }

    /// All nonzero holding counts as ((x, l), h) entries.
    pub fn holding_entries(&self) -> impl Iterator<Item = ((LatticePoint, u64), u64)> + '_ {
        self.holding.iter().map(|(&(key, l), &h)| {
            let (x, y) = unpack2(key);
            ((LatticePoint::new(vec![x, y]).unwrap(), l), h)
        })
    }

    pub fn xi_tilde_entries(&self) -> impl Iterator<Item = (LatticePoint, u64)> + '_ {
        self.xi_tilde.iter().map(|(&key, &c)| {
            let (x, y) = unpack2(key);
            (LatticePoint::new(vec![x, y]).unwrap(), c)
        })
    }

    /// Rebuild the original path through time n from the jump chain and
    /// the holding counts.
    pub fn reconstruct_path(&self, walk: &WalkRecord) -> Result<Vec<(i64, i64)>> {
        let coords = walk.path.as_deref().ok_or(Error::PathNotRetained)?;
        let flat = Flat {
            coords,
            len: walk.length,
        };
        let mut out = Vec::with_capacity(self.n as usize + 1);
        let mut visits: FxHashMap<u64, u64> = FxHashMap::default();
        for &t in &self.jump_index {
            let (x, y) = flat.pt(t);
            let key = pack2(x, y);
            let l = {
                let c = visits.entry(key).or_insert(0);
                *c += 1;
                *c
            };
            out.push((x, y));
            let h = self.holding.get(&(key, l)).copied().unwrap_or(0);
            for _ in 0..h {
                out.push((x + 1, y));
                out.push((x, y));
            }
        }
        if self.trailing {
            let (x, y) = *out.last().expect("jump chain never empty");
            out.push((x + 1, y));
        }
        Ok(out)
    }
}

/// Both decompositions of the walk prefix [0, n], with the local-time
/// identity checked exactly at every visited site before returning.
pub fn decompose(walk: &WalkRecord, n: u64) -> Result<DecompositionView> {
    if walk.dimension != 2 {
        return Err(Error::BadDimension(walk.dimension));
    }
    if n > walk.length {
        return Err(Error::invalid(
            "n",
            format!("{n} exceeds walk length {}", walk.length),
        ));
    }
    let coords = walk.path.as_deref().ok_or(Error::PathNotRetained)?;
    let flat = Flat {
        coords,
        len: walk.length,
    };
    let plain = build_side(&flat, n, 1);
    let primed = build_side(&flat, n, -1);

    let mut total: FxHashMap<u64, u64> = FxHashMap::default();
    for t in 0..=n {
        let (x, y) = flat.pt(t);
        *total.entry(pack2(x, y)).or_insert(0) += 1;
    }
    for side in [&plain, &primed] {
        for (&key, &count) in &total {
            let split = side.xi_tilde.get(&key).copied().unwrap_or(0)
                + side.xi_lazy.get(&key).copied().unwrap_or(0);
            if split != count {
                let (x, y) = unpack2(key);
                return Err(Error::Invariant(format!(
                    "local-time split at ({x},{y}): {split} != {count} (sign {})",
                    side.sign
                )));
            }
        }
        let held: u64 = side.holding.values().sum();
        if held != side.excursions.len() as u64 {
            return Err(Error::Invariant(format!(
                "holding counts sum {held} != excursion count {} (sign {})",
                side.excursions.len(),
                side.sign
            )));
        }
    }

    Ok(DecompositionView {
        n,
        trailing: plain.trailing,
        trailing_primed: primed.trailing,
        excursions: plain.excursions,
        excursions_primed: primed.excursions,
        clock: plain.clock,
        clock_primed: primed.clock,
        jump_index: plain.jump_index,
        jump_index_primed: primed.jump_index,
        xi_tilde: plain.xi_tilde,
        xi_tilde_primed: primed.xi_tilde,
        xi_lazy: plain.xi_lazy,
        xi_lazy_primed: primed.xi_lazy,
        holding: plain.holding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{simulate_walk_with, WalkParams};

    fn record_from(points: &[(i64, i64)]) -> WalkRecord {
        let mut flat = Vec::new();
        for &(x, y) in points {
            flat.push(x);
            flat.push(y);
        }
        WalkRecord {
            dimension: 2,
            seed: 0,
            length: points.len() as u64 - 1,
            start: LatticePoint::new(vec![points[0].0, points[0].1]).unwrap(),
            end: LatticePoint::new(vec![
                points[points.len() - 1].0,
                points[points.len() - 1].1,
            ])
            .unwrap(),
            path: Some(flat),
            stop_rule: crate::walk::StopRule::FixedSteps,
            stop_satisfied: true,
        }
    }

    fn origin() -> LatticePoint {
        LatticePoint::origin(2)
    }

    #[test]
    fn hand_case_single_excursion() {
        let walk = record_from(&[(0, 0), (1, 0), (0, 0)]);
        let view = decompose(&walk, 2).unwrap();
        assert_eq!(view.excursions, vec![2]);
        assert_eq!(view.clock[2], 0);
        assert_eq!(view.xi_tilde(&origin()), 1);
        assert_eq!(view.xi_lazy(&origin()), 1);
        assert_eq!(view.holding(&origin(), 1), 1);
        assert_eq!(view.jump_index, vec![0]);
        assert!(view.excursions_primed.is_empty());
    }

    #[test]
    fn straight_path_has_no_excursions() {
        let pts: Vec<(i64, i64)> = (0..=20).map(|i| (i, 0)).collect();
        let walk = record_from(&pts);
        let view = decompose(&walk, 20).unwrap();
        assert!(view.excursions.is_empty() && view.excursions_primed.is_empty());
        assert_eq!(view.clock[20], 20);
        for (x, c) in view.xi_tilde_entries() {
            assert_eq!(c, 1, "{x}");
            assert_eq!(view.xi_lazy(&x), 0);
        }
    }

    #[test]
    fn primed_family_detected() {
        // (0,0) -> (-1,0) -> (0,0) is an odd-anchored excursion at k=2?
        // No: k must be odd. Build one at k=3.
        let walk = record_from(&[(0, 0), (0, 1), (-1, 1), (0, 1)]);
        let view = decompose(&walk, 3).unwrap();
        assert_eq!(view.excursions_primed, vec![3]);
        assert!(view.excursions.is_empty());
        assert_eq!(view.clock_primed[3], 1);
        let anchor = LatticePoint::new(vec![0, 1]).unwrap();
        assert_eq!(view.xi_lazy_primed(&anchor), 1);
        assert_eq!(view.xi_tilde_primed(&anchor), 1);
    }

    #[test]
    fn trailing_half_excursion_counts_lazy() {
        // At n=1 the step to (1,0) opens the excursion completed at k=2.
        let walk = record_from(&[(0, 0), (1, 0), (0, 0)]);
        let view = decompose(&walk, 1).unwrap();
        assert!(view.trailing);
        assert_eq!(view.clock[1], 0);
        let e1 = LatticePoint::new(vec![1, 0]).unwrap();
        assert_eq!(view.xi_lazy(&e1), 1);
        assert_eq!(view.xi_tilde(&e1), 0);
        assert!(view.excursions.is_empty());
    }

    #[test]
    fn consecutive_excursions_fold_into_one_holding_count() {
        let walk = record_from(&[(0, 0), (1, 0), (0, 0), (1, 0), (0, 0), (0, 1)]);
        let view = decompose(&walk, 5).unwrap();
        assert_eq!(view.excursions, vec![2, 4]);
        assert_eq!(view.holding(&origin(), 1), 2);
        assert_eq!(view.xi_tilde(&origin()), 1);
        assert_eq!(view.xi_lazy(&origin()), 2);
        assert_eq!(view.clock[5], 1);
    }

    #[test]
    fn clock_nondecreasing_unit_steps() {
        let walk = simulate_walk_with(&WalkParams::fixed(2, 5_000, 99)).unwrap();
        let view = decompose(&walk, 5_000).unwrap();
        for c in [&view.clock, &view.clock_primed] {
            assert_eq!(c[0], 0);
            for t in 1..c.len() {
                let d = c[t] as i64 - c[t - 1] as i64;
                assert!((0..=1).contains(&d), "clock step {d} at {t}");
            }
            assert!(c[5_000] <= 5_000);
        }
        // Direct check of the counting formula for the clock.
        let in_range = view
            .excursions
            .iter()
            .filter(|&&k| k >= 2 && k <= 5_000)
            .count() as u64;
        let trail = u64::from(view.trailing);
        assert_eq!(view.clock[5_000], 5_000 - 2 * in_range - trail);
    }

    #[test]
    fn lazy_parity_equality_with_single_exception() {
        for seed in 0..20 {
            let walk = simulate_walk_with(&WalkParams::fixed(2, 4_000, 1000 + seed)).unwrap();
            let n = 4_000;
            let view = decompose(&walk, n).unwrap();
            let exceptional = if view.trailing {
                Some(walk.point(n - 1).unwrap())
            } else {
                None
            };
            for (x, _) in view.xi_tilde_entries() {
                if x.site_parity() != 0 {
                    continue;
                }
                let partner = x.shifted(0, 1);
                let lhs = view.xi_lazy(&x);
                let rhs = view.xi_lazy(&partner);
                if Some(&x) == exceptional.as_ref() {
                    assert_eq!(rhs, lhs + 1, "trailing pair at {x}");
                } else {
                    assert_eq!(lhs, rhs, "pair at {x}");
                }
            }
        }
    }

    #[test]
    fn reconstruction_round_trip() {
        for seed in 0..10 {
            let walk = simulate_walk_with(&WalkParams::fixed(2, 3_000, 77 + seed)).unwrap();
            for n in [0u64, 1, 2, 997, 3_000] {
                let view = decompose(&walk, n).unwrap();
                let rebuilt = view.reconstruct_path(&walk).unwrap();
                let coords = walk.path.as_deref().unwrap();
                assert_eq!(rebuilt.len() as u64, n + 1);
                for (t, &(x, y)) in rebuilt.iter().enumerate() {
                    assert_eq!(
                        (x, y),
                        (coords[2 * t], coords[2 * t + 1]),
                        "seed {seed} n {n} t {t}"
                    );
                }
            }
        }
    }

    #[test]
    fn identity_over_random_walks() {
        for seed in 0..50 {
            let walk = simulate_walk_with(&WalkParams::fixed(2, 10_000, 40_000 + seed)).unwrap();
            let view = decompose(&walk, 10_000).unwrap();
            let field = crate::local_time::local_time_profile(&walk, 10_000).unwrap();
            for (x, &c) in field.counts.iter() {
                assert_eq!(view.xi_tilde(x) + view.xi_lazy(x), c);
                assert_eq!(view.xi_tilde_primed(x) + view.xi_lazy_primed(x), c);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let walk3 = simulate_walk_with(&WalkParams::fixed(3, 10, 1)).unwrap();
        assert!(matches!(
            decompose(&walk3, 10),
            Err(Error::BadDimension(3))
        ));
        let walk = simulate_walk_with(&WalkParams::fixed(2, 10, 1)).unwrap();
        assert!(decompose(&walk, 11).is_err());
        let mut no_path = simulate_walk_with(&WalkParams::fixed(2, 10, 1)).unwrap();
        no_path.path = None;
        assert!(matches!(
            decompose(&no_path, 5),
            Err(Error::PathNotRetained)
        ));
    }
}
