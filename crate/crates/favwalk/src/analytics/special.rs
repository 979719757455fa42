//! Stopping-time threshold scales, their re-expansion, and the maximal
//! absolute value law of Brownian motion used by the scaling checks.

use crate::{Error, Result};
use std::f64::consts::PI;

/// Exponent of the threshold scale: sqrt(pi) m^{1/2} + pi^{13/10 + d/2} m^{3/10 + d/2}.
pub fn psi_log_threshold(m: f64, delta: f64) -> Result<f64> {
    if !(m >= 1.0) || !m.is_finite() {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", "must be positive"));
    }
    Ok(PI.sqrt() * m.sqrt() + PI.powf(1.3 + delta / 2.0) * m.powf(0.3 + delta / 2.0))
}

/// The threshold scale itself; infinite when the exponent exceeds f64 range.
pub fn psi_threshold(m: f64, delta: f64) -> Result<f64> {
    Ok(psi_log_threshold(m, delta)?.exp())
}

/// Two-term recovery of m from log psi_m at delta = 7/5 - 4 kappa1:
/// m = (1/pi) L^2 - 2 L^{3 - 4 kappa1} up to a power-law residual.
pub fn re_expansion_m(log_psi: f64, kappa1: f64) -> Result<f64> {
    if !(log_psi > 0.0) {
        return Err(Error::invalid("log_psi", "must be positive"));
    }
    if !(kappa1 > 0.0 && kappa1 < 0.35) {
        return Err(Error::invalid("kappa1", "must lie in (0, 0.35)"));
    }
    Ok(log_psi * log_psi / PI - 2.0 * log_psi.powf(3.0 - 4.0 * kappa1))
}

/// Invert m -> log psi_m(delta) by bisection; the map is strictly
/// increasing in m.
pub fn invert_log_threshold(log_psi: f64, delta: f64) -> Result<f64> {
    if !(log_psi >= psi_log_threshold(1.0, delta)?) {
        return Err(Error::invalid("log_psi", "below the m = 1 value"));
    }
    let mut lo = 1.0f64;
    let mut hi = 2.0f64;
    while psi_log_threshold(hi, delta)? < log_psi {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NoConvergence("threshold inversion overflow".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if psi_log_threshold(mid, delta)? < log_psi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Distribution function of max_{s <= u} |B_s| at r, from the alternating
/// series (4/pi) sum (-1)^k/(2k+1) exp(-(2k+1)^2 pi^2 u / (8 r^2)),
/// summed until the term drops below 1e-14.
pub fn bm_maxabs_cdf(r: f64, u: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::invalid("r", "must be positive"));
    }
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::invalid("u", "must be positive"));
    }
    let c = PI * PI * u / (8.0 * r * r);
    let mut sum = 0.0;
    let mut k = 0u64;
    loop {
        let odd = (2 * k + 1) as f64;
        let term = (-odd * odd * c).exp() / odd;
        sum += if k % 2 == 0 { term } else { -term };
        if term < 1e-14 {
            break;
        }
        k += 1;
        if k > 100_000_000 {
            return Err(Error::NoConvergence("maximal-law series stalled".into()));
        }
    }
    Ok((4.0 / PI * sum).clamp(0.0, 1.0))
}

/// Fraction of seeded 1D walks of length `steps` whose running maximum of
/// |position| stays at or below r * sqrt(steps); converges to
/// `bm_maxabs_cdf(r, 1)` by the invariance principle.
pub fn simulate_maxabs_probability(r: f64, steps: u64, paths: u64, seed: u64) -> Result<(f64, f64)> {
    use rand::RngCore;
    if !(r > 0.0) || steps == 0 || paths == 0 {
        return Err(Error::invalid("r/steps/paths", "must be positive"));
    }
    let bound = (r * (steps as f64).sqrt()).floor() as i64;
    let mut stayed = 0u64;
    for i in 0..paths {
        let mut rng = crate::rng::rng_from_seed(crate::rng::trial_seed(seed, i));
        let mut pos = 0i64;
        let mut inside = true;
        let mut t = 0u64;
        'path: while t < steps {
            let mut word = rng.next_u64();
            let chunk = 64.min(steps - t);
            for _ in 0..chunk {
                pos += 1 - 2 * (word & 1) as i64;
                word >>= 1;
                if pos.abs() > bound {
                    inside = false;
                    break 'path;
                }
            }
            t += chunk;
        }
        if inside {
            stayed += 1;
        }
    }
    let p = stayed as f64 / paths as f64;
    let se = (p * (1.0 - p) / paths as f64).sqrt();
    Ok((p, se))
}
