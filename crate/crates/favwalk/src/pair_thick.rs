//! Pair statistic over thick points in transient dimensions: counts time
//! pairs (i, j) within a logarithmic window whose sites both carry large
//! local time and are avoided by the walk strictly between the two times.

use crate::hash::FxHashMap;
use crate::walk::WalkRecord;
use crate::{Error, Result};

/// Window constraint linking the local-time discount to the tail exponent;
/// violations leave the statistic well defined but weaken its decay bound.
pub fn window_constraint_satisfied(epsilon: f64, delta: f64) -> bool {
    (1.0 + delta) * (1.0 - epsilon) * (1.0 - epsilon) > 1.0 + delta / 2.0
}

/// Counts pairs i < j <= min(i + alpha log n, n) with
/// min(xi(S_i, n), xi(S_j, n)) >= (1 - epsilon) alpha log n,
/// S_i != S_j, and neither endpoint site revisited on (i, j).
pub fn pair_thick_statistic(
    walk: &WalkRecord,
    n: u64,
    epsilon: f64,
    alpha_const: f64,
) -> Result<u64> {
    if walk.dimension < 3 {
        return Err(Error::invalid(
            "dimension",
            format!("pair statistic needs d >= 3, got {}", walk.dimension),
        ));
    }
    if n > walk.length {
        return Err(Error::invalid("n", format!("{n} > walk length {}", walk.length)));
    }
    if !(alpha_const > 0.0) {
        return Err(Error::invalid("alpha_const", "must be positive"));
    }
    if n == 0 {
        return Ok(0);
    }
    let d = walk.dimension as usize;
    let path = walk.path.as_ref().ok_or(Error::PathNotRetained)?;
    let len = n as usize + 1;
    let site = |t: usize| &path[t * d..t * d + d];

    let log_n = (n as f64).ln();
    let threshold = (1.0 - epsilon) * alpha_const * log_n;
    let window = (alpha_const * log_n).floor() as usize;

    // Visit counts at horizon n, and same-site previous/next time links.
    let mut counts: FxHashMap<&[i64], u32> = FxHashMap::default();
    let mut last_seen: FxHashMap<&[i64], usize> = FxHashMap::default();
    let mut prev = vec![usize::MAX; len];
    let mut next = vec![usize::MAX; len];
    for t in 0..len {
        let s = site(t);
        *counts.entry(s).or_insert(0) += 1;
        if let Some(&p) = last_seen.get(s) {
            prev[t] = p;
            next[p] = t;
        }
        last_seen.insert(s, t);
    }

    let qualifies = |t: usize| (counts[site(t)] as f64) >= threshold;

    let mut total = 0u64;
    for i in 0..len - 1 {
        if !qualifies(i) {
            continue;
        }
        let j_hi = (i + window).min(n as usize);
        for j in i + 1..=j_hi {
            // endpoint sites untouched strictly between i and j
            if next[i] < j || (prev[j] != usize::MAX && prev[j] > i) {
                continue;
            }
            if site(i) == site(j) {
                continue;
            }
            if qualifies(j) {
                total += 1;
            }
        }
    }
    Ok(total)
}
