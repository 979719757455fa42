//! Near-favorite site sets at the k-th arrival to a local-time level,
//! their even/odd refinements, and the anomalous-external-count sets
//! built on the lazy decomposition.

use crate::decomp::{decompose, DecompositionView};
use crate::lattice::LatticePoint;
use crate::local_time::{local_time_profile, LocalTimeField};
use crate::pairing::PairingKind;
use crate::walk::WalkRecord;
use crate::{Error, Result};

/// Smallest constant with (1/(2 sigma^2)) (16/15) c^2 = 18, i.e. sqrt(2.4).
pub const DEFAULT_C_STAR: f64 = 1.5491933384829668;
pub const DEFAULT_KAPPA1: f64 = 0.34;
pub const DEFAULT_KAPPA2: f64 = 0.335;
pub const DEFAULT_GRID_N: u64 = 67;

/// First k times the field reaches local-time level m, with the sites
/// doing so. Errors when the walk resolves fewer than k arrivals.
pub fn level_arrivals(walk: &WalkRecord, m: u64, k: u64) -> Result<Vec<(u64, LatticePoint)>> {
    if m == 0 || k == 0 {
        return Err(Error::invalid("m,k", "level and rank must be positive"));
    }
    let coords = walk.path.as_deref().ok_or(Error::PathNotRetained)?;
    let d = walk.dimension as usize;
    let mut counts: crate::hash::FxHashMap<&[i64], u64> = crate::hash::FxHashMap::default();
    let mut out = Vec::new();
    for t in 0..=walk.length {
        let site = &coords[t as usize * d..t as usize * d + d];
        let c = counts.entry(site).or_insert(0);
        *c += 1;
        if *c == m {
            out.push((t, LatticePoint::new(site.to_vec())?));
            if out.len() as u64 == k {
                return Ok(out);
            }
        }
    }
    Err(Error::invalid(
        "k",
        format!(
            "only {} arrivals at level {m} within {} steps",
            out.len(),
            walk.length
        ),
    ))
}

#[derive(Clone, Debug)]
pub struct NearFavoriteSet {
    pub m: u64,
    pub k: u64,
    pub alpha: f64,
    /// Arrival time T of the k-th site reaching level m.
    pub time: u64,
    pub members: Vec<LatticePoint>,
    pub even_part: Vec<LatticePoint>,
    pub odd_part: Vec<LatticePoint>,
}

/// Sites whose local time at the k-th level-m arrival lies strictly
/// inside (m - m^alpha, m), excluding both members of the pairs already
/// holding the first k level-m sites.
pub fn near_favorite_sets(
    walk: &WalkRecord,
    m: u64,
    k: u64,
    alpha: f64,
) -> Result<NearFavoriteSet> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("alpha", "must lie in (0, 1]"));
    }
    let arrivals = level_arrivals(walk, m, k)?;
    let time = arrivals[k as usize - 1].0;
    let field = local_time_profile(walk, time)?;
    let excluded: Vec<LatticePoint> = arrivals
        .iter()
        .map(|(_, site)| PairingKind::X.pair_of(site).0)
        .collect();
    let lower = m as f64 - (m as f64).powf(alpha);
    let mut members = Vec::new();
    let mut even_part = Vec::new();
    let mut odd_part = Vec::new();
    for (x, &c) in &field.counts {
        let cf = c as f64;
        if !(cf > lower && c < m) {
            continue;
        }
        let base = PairingKind::X.pair_of(x).0;
        if excluded.contains(&base) {
            continue;
        }
        members.push(x.clone());
        let is_pair_max = c >= field.count(&PairingKind::X.partner(x));
        if is_pair_max {
            if x.site_parity() == 0 {
                even_part.push(x.clone());
            } else {
                odd_part.push(x.clone());
            }
        }
    }
    members.sort();
    even_part.sort();
    odd_part.sort();
    if members.len() > 2 * (even_part.len() + odd_part.len()) {
        return Err(Error::Invariant(format!(
            "{} members exceed twice the {} + {} parity parts",
            members.len(),
            even_part.len(),
            odd_part.len()
        )));
    }
    Ok(NearFavoriteSet {
        m,
        k,
        alpha,
        time,
        members,
        even_part,
        odd_part,
    })
}

#[derive(Clone, Debug)]
pub struct ThetaSets {
    pub m: u64,
    pub k: u64,
    pub a: f64,
    pub b: f64,
    pub lower_threshold: f64,
    pub upper_threshold: f64,
    /// Arrival time T of the k-th site reaching level m.
    pub time: u64,
    pub minus: Vec<LatticePoint>,
    pub plus: Vec<LatticePoint>,
    pub minus_primed: Vec<LatticePoint>,
    pub plus_primed: Vec<LatticePoint>,
}

impl ThetaSets {
    pub fn theta(&self) -> Vec<LatticePoint> {
        let mut v = self.minus.clone();
        v.extend(self.plus.iter().cloned());
        v.sort();
        v
    }

    pub fn theta_primed(&self) -> Vec<LatticePoint> {
        let mut v = self.minus_primed.clone();
        v.extend(self.plus_primed.iter().cloned());
        v.sort();
        v
    }

    pub fn is_empty(&self) -> bool {
        self.minus.is_empty()
            && self.plus.is_empty()
            && self.minus_primed.is_empty()
            && self.plus_primed.is_empty()
    }
}

/// Sites with local time in [a, b) at the k-th level-m arrival whose
/// external count sits below (15/16)a - c_* m^{1-kappa1} or above
/// (15/16)b + c_* m^{1-kappa1}; even-parity sites are judged against the
/// unprimed external field and odd-parity sites against the primed one.
pub fn theta_sets(
    walk: &WalkRecord,
    m: u64,
    k: u64,
    interval: (f64, f64),
    c_star: f64,
    kappa1: f64,
) -> Result<ThetaSets> {
    let (a, b) = interval;
    if !(0.0 <= a && a <= b && b <= m as f64) {
        return Err(Error::invalid("interval", "need 0 <= a <= b <= m"));
    }
    if !(c_star > 0.0) || !(kappa1 > 0.0 && kappa1 < 0.5) {
        return Err(Error::invalid("c_star/kappa1", "out of range"));
    }
    let arrivals = level_arrivals(walk, m, k)?;
    let time = arrivals[k as usize - 1].0;
    let field = local_time_profile(walk, time)?;
    let view = decompose(walk, time)?;
    let spread = c_star * (m as f64).powf(1.0 - kappa1);
    let lower_threshold = 15.0 / 16.0 * a - spread;
    let upper_threshold = 15.0 / 16.0 * b + spread;
    let mut sets = ThetaSets {
        m,
        k,
        a,
        b,
        lower_threshold,
        upper_threshold,
        time,
        minus: Vec::new(),
        plus: Vec::new(),
        minus_primed: Vec::new(),
        plus_primed: Vec::new(),
    };
    for (x, &c) in &field.counts {
        let cf = c as f64;
        if !(cf >= a && cf < b) {
            continue;
        }
        let (external, minus, plus) = if x.site_parity() == 0 {
            (view.xi_tilde(x), &mut sets.minus, &mut sets.plus)
        } else {
            (
                view.xi_tilde_primed(x),
                &mut sets.minus_primed,
                &mut sets.plus_primed,
            )
        };
        let ef = external as f64;
        if ef <= lower_threshold {
            minus.push(x.clone());
        } else if ef > upper_threshold {
            plus.push(x.clone());
        }
    }
    for v in [
        &mut sets.minus,
        &mut sets.plus,
        &mut sets.minus_primed,
        &mut sets.plus_primed,
    ] {
        v.sort();
    }
    Ok(sets)
}

/// Convenience wrapper: sets built by decomposing an already-computed
/// view, for callers that hold one.
pub fn theta_sets_from_view(
    field: &LocalTimeField,
    view: &DecompositionView,
    m: u64,
    interval: (f64, f64),
    c_star: f64,
    kappa1: f64,
) -> Result<(Vec<LatticePoint>, Vec<LatticePoint>)> {
    let (a, b) = interval;
    if !(0.0 <= a && a <= b && b <= m as f64) {
        return Err(Error::invalid("interval", "need 0 <= a <= b <= m"));
    }
    let spread = c_star * (m as f64).powf(1.0 - kappa1);
    let lo = 15.0 / 16.0 * a - spread;
    let hi = 15.0 / 16.0 * b + spread;
    let mut theta = Vec::new();
    let mut theta_primed = Vec::new();
    for (x, &c) in &field.counts {
        let cf = c as f64;
        if !(cf >= a && cf < b) {
            continue;
        }
        let (ef, out) = if x.site_parity() == 0 {
            (view.xi_tilde(x) as f64, &mut theta)
        } else {
            (view.xi_tilde_primed(x) as f64, &mut theta_primed)
        };
        if ef <= lo || ef > hi {
            out.push(x.clone());
        }
    }
    theta.sort();
    theta_primed.sort();
    Ok((theta, theta_primed))
}
