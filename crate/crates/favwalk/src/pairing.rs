//! The three horizontal site pairings of the plane and the paired view
//! of a local-time field.

use crate::hash::FxHashMap;
use crate::lattice::LatticePoint;
use crate::local_time::LocalTimeField;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Which member of each pair (x, x + e1) is taken as the base:
/// X bases at even site parity, Y at even first coordinate, YPrime at
/// odd first coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingKind {
    X,
    Y,
    YPrime,
}

impl PairingKind {
    fn is_base(self, p: &LatticePoint) -> bool {
        match self {
            PairingKind::X => p.site_parity() == 0,
            PairingKind::Y => p.first_coord_parity() == 0,
            PairingKind::YPrime => p.first_coord_parity() == 1,
        }
    }

    /// The other member of p's pair.
    pub fn partner(self, p: &LatticePoint) -> LatticePoint {
        if self.is_base(p) {
            p.shifted(0, 1)
        } else {
            p.shifted(0, -1)
        }
    }

    /// The pair containing p, base first.
    pub fn pair_of(self, p: &LatticePoint) -> (LatticePoint, LatticePoint) {
        if self.is_base(p) {
            (p.clone(), p.shifted(0, 1))
        } else {
            (p.shifted(0, -1), p.clone())
        }
    }
}

/// Per-pair minimum and maximum of the local times of the two members.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub low: u64,
    pub high: u64,
}

/// Group a local-time field by pairs; keys are pair bases. Every visited
/// site lands in exactly one pair, and the pair totals preserve the
/// visit count n + 1.
pub fn paired_profile(
    field: &LocalTimeField,
    pairing: PairingKind,
) -> Result<BTreeMap<LatticePoint, PairCounts>> {
    let mut grouped: FxHashMap<LatticePoint, (u64, u64)> = FxHashMap::default();
    for (x, &c) in &field.counts {
        if x.dimension() != 2 {
            return Err(Error::BadDimension(x.dimension()));
        }
        let (base, _) = pairing.pair_of(x);
        let slot = grouped.entry(base.clone()).or_insert((0, 0));
        if *x == base {
            slot.0 = c;
        } else {
            slot.1 = c;
        }
    }
    let mut out = BTreeMap::new();
    let mut total = 0u64;
    for (base, (a, b)) in grouped {
        total += a + b;
        out.insert(
            base,
            PairCounts {
                low: a.min(b),
                high: a.max(b),
            },
        );
    }
    if total != field.time + 1 {
        return Err(Error::Invariant(format!(
            "paired totals {total} != visit count {}",
            field.time + 1
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local_time::local_time_profile;
    use crate::walk::{simulate_walk_with, WalkParams};

    fn pt(x: i64, y: i64) -> LatticePoint {
        LatticePoint::new(vec![x, y]).unwrap()
    }

    #[test]
    fn partner_is_an_involution_everywhere() {
        for kind in [PairingKind::X, PairingKind::Y, PairingKind::YPrime] {
            for x in -3..=3 {
                for y in -3..=3 {
                    let p = pt(x, y);
                    let q = kind.partner(&p);
                    assert!(p.is_neighbor_of(&q));
                    assert_eq!(kind.partner(&q), p, "{kind:?} at {p}");
                    let (b1, t1) = kind.pair_of(&p);
                    let (b2, t2) = kind.pair_of(&q);
                    assert_eq!((b1.clone(), t1.clone()), (b2, t2));
                    assert_eq!(t1, b1.shifted(0, 1));
                }
            }
        }
    }

    #[test]
    fn pairings_differ_in_base_rule() {
        // (1,1) has even site parity but odd first coordinate.
        let p = pt(1, 1);
        assert_eq!(PairingKind::X.partner(&p), pt(2, 1));
        assert_eq!(PairingKind::Y.partner(&p), pt(0, 1));
        assert_eq!(PairingKind::YPrime.partner(&p), pt(2, 1));
    }

    #[test]
    fn two_site_field_groups_into_one_pair() {
        let mut counts = crate::hash::FxHashMap::default();
        counts.insert(pt(0, 0), 2u64);
        counts.insert(pt(1, 0), 1u64);
        let field = LocalTimeField {
            counts,
            time: 2,
            max_value: 2,
            argmax_set: vec![pt(0, 0)],
        };
        let grouped = paired_profile(&field, PairingKind::X).unwrap();
        assert_eq!(grouped.len(), 1);
        let pc = grouped.get(&pt(0, 0)).unwrap();
        assert_eq!((pc.low, pc.high), (1, 2));
    }

    #[test]
    fn single_site_field_pairs_with_zero() {
        let mut counts = crate::hash::FxHashMap::default();
        counts.insert(pt(0, 1), 1u64);
        let field = LocalTimeField {
            counts,
            time: 0,
            max_value: 1,
            argmax_set: vec![pt(0, 1)],
        };
        let grouped = paired_profile(&field, PairingKind::X).unwrap();
        // (0,1) has odd site parity, so its X base is (-1,1).
        let pc = grouped.get(&pt(-1, 1)).unwrap();
        assert_eq!((pc.low, pc.high), (0, 1));
    }

    #[test]
    fn grouping_matches_brute_force_and_preserves_mass() {
        for kind in [PairingKind::X, PairingKind::Y, PairingKind::YPrime] {
            let walk = simulate_walk_with(&WalkParams::fixed(2, 20_000, 314)).unwrap();
            let field = local_time_profile(&walk, 20_000).unwrap();
            let grouped = paired_profile(&field, kind).unwrap();
            let mass: u64 = grouped.values().map(|pc| pc.low + pc.high).sum();
            assert_eq!(mass, 20_001);
            for (base, pc) in &grouped {
                let a = field.count(base);
                let b = field.count(&base.shifted(0, 1));
                assert_eq!(pc.low, a.min(b));
                assert_eq!(pc.high, a.max(b));
                assert!(pc.low <= pc.high);
            }
        }
    }
}
