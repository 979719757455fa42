//! Negative binomial holding-count laws.
//!
//! A jump-chain visit carries a Geometric number of two-step excursions
//! with success probability 15/16; the lazy local time accumulated over i
//! visits is the sum of i such draws. `pmf(i, j)` is that law, `pmf_shifted`
//! its translate by i (the total local time).

use crate::hash::FxHashMap;
use crate::{Error, Result};
use statrs::function::gamma::ln_gamma;

/// Success probability of one holding draw.
pub const SUCCESS_P: f64 = 15.0 / 16.0;
/// Variance of one holding draw.
pub const SIGMA2: f64 = 16.0 / 225.0;

/// Mass cut below which cached rows stop extending.
const ROW_TAIL_CUT: f64 = 1e-15;

#[inline]
pub fn ln_pmf(i: u64, j: u64) -> f64 {
    let (i, j) = (i as f64, j as f64);
    ln_gamma(i + j) - ln_gamma(i) - ln_gamma(j + 1.0)
        + i * SUCCESS_P.ln()
        + j * (1.0 - SUCCESS_P).ln()
}

/// P(sum of i holding draws = j).
pub fn pmf(i: u64, j: u64) -> Result<f64> {
    if i == 0 {
        return Err(Error::invalid("i", "needs at least one draw"));
    }
    Ok(ln_pmf(i, j).exp())
}

/// The shifted law: P(total = j) = pmf(i, j - i) for j >= i.
pub fn pmf_shifted(i: u64, j: u64) -> Result<f64> {
    if j < i {
        return Err(Error::invalid("j", format!("shifted support starts at i = {i}")));
    }
    pmf(i, j - i)
}

/// P(sum of i geometric draws with the given success probability = j),
/// for success probabilities other than the holding value.
pub fn pmf_with(i: u64, success: f64, j: u64) -> Result<f64> {
    if i == 0 {
        return Err(Error::invalid("i", "needs at least one draw"));
    }
    if !(success > 0.0 && success < 1.0) {
        return Err(Error::invalid("success", "must lie strictly inside (0, 1)"));
    }
    let (fi, fj) = (i as f64, j as f64);
    Ok((ln_gamma(fi + fj) - ln_gamma(fi) - ln_gamma(fj + 1.0)
        + fi * success.ln()
        + fj * (1.0 - success).ln())
    .exp())
}

/// P(sum of i geometric draws with the given success probability lands in
/// [lo, hi]), by direct summation.
pub fn interval_mass_with(i: u64, success: f64, lo: u64, hi: u64) -> Result<f64> {
    if hi < lo {
        return Ok(0.0);
    }
    let mut p = pmf_with(i, success, lo)?;
    let mut acc = p;
    for j in lo..hi {
        p *= (i + j) as f64 * (1.0 - success) / (j + 1) as f64;
        acc += p;
    }
    Ok(acc)
}

/// Exact mean of the lazy count at external local time i.
pub fn mean(i: u64) -> f64 {
    i as f64 / 15.0
}

/// Exact variance of the lazy count at external local time i.
pub fn variance(i: u64) -> f64 {
    i as f64 * SIGMA2
}

/// Cached pmf rows with a geometric tail-ratio cutoff.
#[derive(Default)]
pub struct NegBinomTable {
    rows: FxHashMap<u64, Vec<f64>>,
}

impl NegBinomTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// pmf row of i, covering all mass but at most `ROW_TAIL_CUT`.
    pub fn row(&mut self, i: u64) -> Result<&[f64]> {
        if i == 0 {
            return Err(Error::invalid("i", "needs at least one draw"));
        }
        Ok(self.rows.entry(i).or_insert_with(|| build_row(i)))
    }

    pub fn pmf(&mut self, i: u64, j: u64) -> Result<f64> {
        let row = self.row(i)?;
        Ok(row.get(j as usize).copied().unwrap_or(0.0))
    }
}

/// Builds a row by the exact multiplicative recurrence
/// p(i, j+1) = p(i, j) * (i + j) / (16 (j + 1)).
fn build_row(i: u64) -> Vec<f64> {
    let mut row = Vec::with_capacity(i as usize / 8 + 16);
    let mut p = SUCCESS_P.powf(i as f64);
    if p == 0.0 {
        // Row head underflows for very large i; fall back to log space.
        p = ln_pmf(i, 0).exp();
    }
    let mut acc = p;
    row.push(p);
    let mut j = 0u64;
    loop {
        let ratio = (i + j) as f64 / (16.0 * (j + 1) as f64);
        p *= ratio;
        j += 1;
        row.push(p);
        acc += p;
        // Beyond the mode the ratio is below 1 and keeps falling, so the
        // remaining mass is at most p * ratio / (1 - ratio).
        if ratio < 1.0 {
            let tail_bound = p * ratio / (1.0 - ratio);
            if tail_bound < ROW_TAIL_CUT && 1.0 - acc < ROW_TAIL_CUT {
                break;
            }
        }
        if j > 100 * (i + 10) {
            break;
        }
    }
    row
}

/// Index of the first row entry from which the remaining mass is provably
/// below `eps`, via the geometric ratio bound.
pub fn tail_cutoff(i: u64, eps: f64) -> u64 {
    let mut p = ln_pmf(i, 0).exp();
    let mut j = 0u64;
    loop {
        let ratio = (i + j) as f64 / (16.0 * (j + 1) as f64);
        if ratio < 1.0 && p * ratio / (1.0 - ratio) < eps {
            return j + 1;
        }
        p *= ratio;
        j += 1;
    }
}

/// Gaussian local-limit value for the shifted law at total j, with its
/// validity flag.
///
/// The flag is true on the central window |j - 16 i / 15| < rho * i. A
/// window pinned to |i - j| itself would always contain totals next to
/// j = i, where the relative error of the Gaussian form is unbounded, so
/// the window is centered at the mean instead; see `DEFAULT_RHO`.
pub fn local_clt_approx_with(i: u64, j: u64, rho: f64) -> (f64, bool) {
    let fi = i as f64;
    let fj = j as f64;
    let mean = 16.0 * fi / 15.0;
    let dev = fj - mean;
    let value = (1.0 / ((2.0 * std::f64::consts::PI).sqrt() * SIGMA2.sqrt() * fi.sqrt()))
        * (-dev * dev / (2.0 * SIGMA2 * fi)).exp();
    let valid = dev.abs() < rho * fi;
    (value, valid)
}

/// Largest window fraction keeping the Gaussian form within 5% relative
/// error of the exact pmf at i = 10^4 (measured; see the calibration test).
pub const DEFAULT_RHO: f64 = 0.0059;

pub fn local_clt_approx(i: u64, j: u64) -> (f64, bool) {
    local_clt_approx_with(i, j, DEFAULT_RHO)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailSide {
    Upper,
    Lower,
}

/// (n / a_n^2) * log of the pmf mass beyond n/15 +- a_n, by exact
/// summation with a geometric bound on the dropped remainder.
pub fn moderate_tail_logratio(n: u64, a_n: f64, side: TailSide) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "must be positive"));
    }
    if !(a_n > 0.0) {
        return Err(Error::invalid("a_n", "must be positive"));
    }
    let mean = n as f64 / 15.0;
    // Both tails are summed relative to their boundary term, so nothing
    // underflows even when individual masses do.
    let ln_sum = match side {
        TailSide::Upper => {
            let j0 = (mean + a_n).floor() as u64 + 1;
            let mut rel = 1.0f64;
            let mut acc = 1.0f64;
            let mut j = j0;
            loop {
                let ratio = (n + j) as f64 / (16.0 * (j + 1) as f64);
                debug_assert!(ratio < 1.0);
                if rel * ratio / (1.0 - ratio) < acc * 1e-18 {
                    break;
                }
                rel *= ratio;
                acc += rel;
                j += 1;
            }
            ln_pmf(n, j0) + acc.ln()
        }
        TailSide::Lower => {
            let cut = mean - a_n;
            let j1 = if cut.fract() == 0.0 { cut - 1.0 } else { cut.floor() };
            if j1 < 0.0 {
                return Err(Error::invalid("a_n", "lower tail is empty"));
            }
            let j1 = j1 as u64;
            let mut rel = 1.0f64;
            let mut acc = 1.0f64;
            let mut j = j1;
            while j > 0 {
                // p(n, j-1) = p(n, j) * 16 j / (n + j - 1)
                rel *= 16.0 * j as f64 / (n + j - 1) as f64;
                if rel < acc * 1e-18 {
                    break;
                }
                acc += rel;
                j -= 1;
            }
            ln_pmf(n, j1) + acc.ln()
        }
    };
    if !ln_sum.is_finite() {
        return Err(Error::NoConvergence("tail mass underflowed".into()));
    }
    Ok(n as f64 / (a_n * a_n) * ln_sum)
}
