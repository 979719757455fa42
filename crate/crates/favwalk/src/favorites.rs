//! Favorite-site event bookkeeping.
//!
//! For each level m, the scan records the time and location at which the
//! k-th distinct site reaches local time m, whether k favorites of common
//! local time m coexist (the level-m site count reaches k before any site
//! reaches m+1), and the supremum of such k.

use crate::hash::{FxHashMap, FxHashSet};
use crate::lattice::LatticePoint;
use crate::walk::WalkRecord;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

/// Arrivals and event flags of one local-time level.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LevelRecord {
    /// `(t, site)` of the k-th site reaching this level, k = index + 1.
    pub arrivals: Vec<(u64, LatticePoint)>,
    /// Simultaneity flags per k; empty while the level is unresolved.
    pub flags: Vec<bool>,
    /// sup{k : k-th arrival precedes the first arrival of the next level},
    /// known once the next level has been entered.
    pub n_m: Option<u64>,
}

/// The (m, k) grid of level arrivals over one walk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FavoriteEventLog {
    pub dimension: u32,
    pub m_limit: u64,
    pub levels: BTreeMap<u64, LevelRecord>,
    /// Largest level whose flags are fully resolved.
    pub m_max: u64,
}

impl FavoriteEventLog {
    pub fn arrival(&self, m: u64, k: u64) -> Option<&(u64, LatticePoint)> {
        self.levels.get(&m)?.arrivals.get(k as usize - 1)
    }

    pub fn time(&self, m: u64, k: u64) -> Option<u64> {
        self.arrival(m, k).map(|(t, _)| *t)
    }

    pub fn location(&self, m: u64, k: u64) -> Option<&LatticePoint> {
        self.arrival(m, k).map(|(_, p)| p)
    }

    /// The simultaneity flag, `None` while unresolved.
    pub fn flag(&self, m: u64, k: u64) -> Option<bool> {
        self.levels.get(&m)?.flags.get(k as usize - 1).copied()
    }

    pub fn n_m(&self, m: u64) -> Option<u64> {
        self.levels.get(&m)?.n_m
    }

    /// Emits one JSON record per resolved (m, k) entry.
    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> Result<()> {
        for (m, rec) in &self.levels {
            for (i, (t, loc)) in rec.arrivals.iter().enumerate() {
                let Some(&flag) = rec.flags.get(i) else {
                    continue;
                };
                let line = serde_json::json!({
                    "m": m,
                    "k": i + 1,
                    "t": t,
                    "loc": loc.coords(),
                    "simultaneous": flag,
                });
                writeln!(out, "{line}")?;
            }
        }
        Ok(())
    }
}

/// Evaluates the avoidance representation of the simultaneity event
/// directly on the path: the k-th flag holds iff for every j in 2..=k the
/// walk avoids the first j-1 level-m sites on the open-closed interval
/// between the (j-1)-th and j-th arrivals.
pub fn avoidance_flags(walk: &WalkRecord, arrivals: &[(u64, LatticePoint)]) -> Result<Vec<bool>> {
    let d = walk.dimension as usize;
    let path = walk.path.as_ref().ok_or(Error::PathNotRetained)?;
    let at = |t: u64| -> &[i64] {
        let i = t as usize * d;
        &path[i..i + d]
    };
    let mut flags = Vec::with_capacity(arrivals.len());
    let mut avoid: FxHashSet<&[i64]> = FxHashSet::default();
    let mut alive = true;
    for (j, window) in arrivals.windows(2).enumerate() {
        if j == 0 {
            flags.push(true);
        }
        let (t_prev, ref loc_prev) = window[0];
        let (t_next, _) = window[1];
        avoid.insert(&path[t_prev as usize * d..t_prev as usize * d + d]);
        debug_assert_eq!(at(t_prev), loc_prev.coords());
        if alive {
            for t in t_prev + 1..=t_next {
                if avoid.contains(at(t)) {
                    alive = false;
                    break;
                }
            }
        }
        flags.push(alive);
    }
    if flags.is_empty() && !arrivals.is_empty() {
        flags.push(true);
    }
    Ok(flags)
}

/// Scans a walk for level arrivals up to `m_limit` and resolves the
/// simultaneity flags of every level whose successor has been entered.
///
/// Flags are computed twice, from the stopping-time comparison and from the
/// avoidance representation, and cross-checked.
pub fn favorite_event_scan(walk: &WalkRecord, m_limit: u64) -> Result<FavoriteEventLog> {
    if m_limit == 0 {
        return Err(Error::invalid("m_limit", "must be at least 1"));
    }
    let d = walk.dimension as usize;
    let mut counts: FxHashMap<&[i64], u64> = FxHashMap::default();
    let mut levels: BTreeMap<u64, LevelRecord> = BTreeMap::new();
    let mut first_arrival: FxHashMap<u64, u64> = FxHashMap::default();

    let path = walk.path.as_ref().ok_or(Error::PathNotRetained)?;
    for (t, p) in path.chunks_exact(d).enumerate() {
        let c = counts.entry(p).or_insert(0);
        *c += 1;
        let level = *c;
        if level <= m_limit {
            levels
                .entry(level)
                .or_default()
                .arrivals
                .push((t as u64, LatticePoint(p.to_vec())));
        }
        if level <= m_limit + 1 {
            first_arrival.entry(level).or_insert(t as u64);
        }
    }

    let mut m_max = 0;
    for m in 1..=m_limit {
        let Some(&t_next) = first_arrival.get(&(m + 1)) else {
            break;
        };
        let rec = levels.get_mut(&m).expect("level below an entered level");
        rec.flags = rec.arrivals.iter().map(|&(t, _)| t < t_next).collect();
        rec.n_m = Some(rec.flags.iter().filter(|&&f| f).count() as u64);
        m_max = m;
    }

    for m in 1..=m_max {
        let rec = &levels[&m];
        let rep = avoidance_flags(walk, &rec.arrivals)?;
        if rep != rec.flags {
            return Err(Error::Invariant(format!(
                "level {m}: avoidance representation disagrees with stopping-time flags"
            )));
        }
    }

    Ok(FavoriteEventLog {
        dimension: walk.dimension,
        m_limit,
        levels,
        m_max,
    })
}
