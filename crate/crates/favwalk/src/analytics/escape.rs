//! Transient-walk constants for d >= 3: the lattice Green's function at
//! small arguments via a scaled-Bessel time integral, the escape
//! probability gamma_d, pair-visit tail exponents, and the derived
//! constants alpha, beta, and delta_star.

use crate::rng::{rng_from_seed, trial_seed, DirectionSampler};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Upper end of the quadrature range; beyond it the integrand is replaced
/// by its two-term power expansion integrated in closed form.
const TAIL_START: f64 = 4096.0;
const GL_ORDER: usize = 24;
/// Largest |y| examined when taking the infimum defining delta_star.
pub const DELTA_STAR_RANGE: u64 = 10;

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 1..n {
                let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn gl_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GL_ORDER))
}

/// Row of exponentially scaled modified Bessel values e^{-z} I_n(z) for
/// n = 0..=n_max, by downward recurrence normalized with the identity
/// I_0 + 2 sum_{k>=1} I_k = e^z.
pub fn scaled_bessel_row(z: f64, n_max: usize) -> Vec<f64> {
    assert!(z >= 0.0 && z.is_finite());
    let mut row = vec![0.0; n_max + 1];
    if z < 1e-8 {
        row[0] = 1.0 - z;
        let mut term = 1.0 - z;
        for n in 1..=n_max {
            term *= z / (2.0 * n as f64);
            row[n] = term;
        }
        return row;
    }
    let start = n_max + (z + 15.0 * z.sqrt()).ceil() as usize + 20;
    let mut above = 0.0f64;
    let mut here = 1e-280f64;
    let mut norm = 0.0f64;
    let mut k = start;
    loop {
        if k <= n_max {
            row[k] = here;
        }
        norm += if k == 0 { here } else { 2.0 * here };
        if k == 0 {
            break;
        }
        let below = above + (2.0 * k as f64 / z) * here;
        above = here;
        here = below;
        if here > 1e270 {
            above *= 1e-200;
            here *= 1e-200;
            norm *= 1e-200;
            for v in row.iter_mut() {
                *v *= 1e-200;
            }
        }
        k -= 1;
    }
    for v in row.iter_mut() {
        *v /= norm;
    }
    row
}

/// Expected total visits to y for the walk on Z^d started at the origin,
/// as the time integral of the product of per-axis scaled Bessel factors.
pub fn green_at(d: u32, y: &[i64]) -> Result<f64> {
    if d < 3 {
        return Err(Error::BadDimension(d));
    }
    if y.len() != d as usize {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: y.len() as u32,
        });
    }
    let orders: Vec<usize> = y.iter().map(|v| v.unsigned_abs() as usize).collect();
    let n_max = orders.iter().copied().max().unwrap_or(0);
    let (nodes, weights) = gl_rule();
    let mut total = 0.0;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while lo < TAIL_START {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (&x, &w) in nodes.iter().zip(weights) {
            let t = mid + half * x;
            let row = scaled_bessel_row(t / d as f64, n_max);
            let f: f64 = orders.iter().map(|&k| row[k]).product();
            total += w * half * f;
        }
        lo = hi;
        hi = (hi * 2.0).min(TAIL_START);
    }
    // Two-term tail: the integrand is (2 pi t / d)^{-d/2} (1 - d*s1/(8t))
    // to first order, with s1 = sum(4 k_i^2 - 1).
    let s1: f64 = orders.iter().map(|&k| (4 * k * k) as f64 - 1.0).sum();
    let half_d = d as f64 / 2.0;
    let base = (d as f64 / (2.0 * PI)).powf(half_d);
    let tail = base
        * (TAIL_START.powf(1.0 - half_d) / (half_d - 1.0)
            - (d as f64 * s1 / 8.0) * TAIL_START.powf(-half_d) / half_d);
    Ok(total + tail)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum EscapeMethod {
    /// gamma_d = 1 / G(0,0) with G from the quadrature above.
    GreenIntegral,
    /// Long-run walk simulation; an escape is called when the walk gets
    /// `call_distance` away from the origin or survives `horizon` steps.
    Simulation {
        trials: u64,
        horizon: u64,
        call_distance: u64,
        seed: u64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EscapeConstants {
    pub dimension: u32,
    pub gamma: f64,
    /// Standard error when gamma came from simulation.
    pub gamma_se: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub t_e1: f64,
    pub delta_star: f64,
    pub delta_star_argmin: Vec<i64>,
}

/// Ratio appearing under the infimum defining delta_star.
fn pair_ratio(gamma: f64, t_y: f64, alpha_inv: f64) -> f64 {
    -2.0 * (1.0 - gamma / (1.0 + t_y)).ln() / alpha_inv
}

fn sorted_tuples(d: usize, max_norm_sq: u64) -> Vec<Vec<u64>> {
    fn rec(d: usize, min: u64, left: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if d == 0 {
            if cur.iter().any(|&c| c > 0) {
                out.push(cur.clone());
            }
            return;
        }
        let mut c = min;
        while c * c <= left {
            cur.push(c);
            rec(d - 1, c, left - c * c, cur, out);
            cur.pop();
            c += 1;
        }
    }
    let mut out = Vec::new();
    rec(d, 0, max_norm_sq, &mut Vec::new(), &mut out);
    out
}

/// Infimum of the pair ratio over 0 < |y| <= DELTA_STAR_RANGE, minus one.
/// Checks that per-shell minima increase outward, which justifies the
/// truncation of the infimum.
fn delta_star(d: u32, gamma: f64, g0: f64) -> Result<(f64, Vec<i64>)> {
    let alpha_inv = -(1.0 - gamma).ln();
    let mut shell_min = vec![f64::INFINITY; DELTA_STAR_RANGE as usize + 1];
    let mut best = f64::INFINITY;
    let mut argmin = Vec::new();
    for tuple in sorted_tuples(d as usize, DELTA_STAR_RANGE * DELTA_STAR_RANGE) {
        let y: Vec<i64> = tuple.iter().map(|&c| c as i64).collect();
        let t_y = green_at(d, &y)? / g0;
        let ratio = pair_ratio(gamma, t_y, alpha_inv);
        let norm_sq: u64 = tuple.iter().map(|&c| c * c).sum();
        let shell = (norm_sq as f64).sqrt().floor() as usize;
        if ratio < shell_min[shell] {
            shell_min[shell] = ratio;
        }
        if ratio < best {
            best = ratio;
            argmin = y;
        }
    }
    for w in 1..DELTA_STAR_RANGE as usize {
        if shell_min[w + 1] < shell_min[w] {
            return Err(Error::Invariant(format!(
                "pair ratio shell minima not increasing at radius {w}"
            )));
        }
    }
    Ok((best - 1.0, argmin))
}

fn step_norm_sq<const D: usize>(pos: &[i64; D]) -> i64 {
    let mut s = 0;
    for &c in pos {
        s += c * c;
    }
    s
}

fn simulate_escape_dim<const D: usize>(
    trials: u64,
    horizon: u64,
    call_distance: u64,
    seed: u64,
) -> u64 {
    let call_sq = (call_distance * call_distance) as i64;
    let mut escapes = 0u64;
    for i in 0..trials {
        let mut rng = rng_from_seed(trial_seed(seed, i));
        let mut dirs = DirectionSampler::new(D as u32);
        let mut pos = [0i64; D];
        let mut escaped = true;
        for _ in 0..horizon {
            let dir = dirs.next(&mut rng);
            let axis = (dir >> 1) as usize;
            pos[axis] += 1 - 2 * (dir & 1) as i64;
            let n2 = step_norm_sq(&pos);
            if n2 == 0 {
                escaped = false;
                break;
            }
            if n2 >= call_sq {
                break;
            }
        }
        if escaped {
            escapes += 1;
        }
    }
    escapes
}

/// Fraction of seeded walks that never return to the start, with an
/// early escape call at `call_distance`.
pub fn simulate_escape_probability(
    d: u32,
    trials: u64,
    horizon: u64,
    call_distance: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if d < 3 || d > crate::lattice::MAX_DIMENSION {
        return Err(Error::BadDimension(d));
    }
    if trials == 0 {
        return Err(Error::invalid("trials", "must be positive"));
    }
    if call_distance < 2 {
        return Err(Error::invalid("call_distance", "must be at least 2"));
    }
    let escapes = match d {
        3 => simulate_escape_dim::<3>(trials, horizon, call_distance, seed),
        4 => simulate_escape_dim::<4>(trials, horizon, call_distance, seed),
        5 => simulate_escape_dim::<5>(trials, horizon, call_distance, seed),
        6 => simulate_escape_dim::<6>(trials, horizon, call_distance, seed),
        7 => simulate_escape_dim::<7>(trials, horizon, call_distance, seed),
        _ => simulate_escape_dim::<8>(trials, horizon, call_distance, seed),
    };
    let p = escapes as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    Ok((p, se))
}

pub fn escape_constants(d: u32, method: EscapeMethod) -> Result<EscapeConstants> {
    if d < 3 {
        return Err(Error::BadDimension(d));
    }
    let g0 = green_at(d, &vec![0; d as usize])?;
    let mut e1 = vec![0i64; d as usize];
    e1[0] = 1;
    let t_e1 = green_at(d, &e1)? / g0;
    let (gamma, gamma_se) = match method {
        EscapeMethod::GreenIntegral => (1.0 / g0, None),
        EscapeMethod::Simulation {
            trials,
            horizon,
            call_distance,
            seed,
        } => {
            let (p, se) = simulate_escape_probability(d, trials, horizon, call_distance, seed)?;
            (p, Some(se))
        }
    };
    let (delta_star, delta_star_argmin) = delta_star(d, gamma, g0)?;
    Ok(EscapeConstants {
        dimension: d,
        gamma,
        gamma_se,
        alpha: -1.0 / (1.0 - gamma).ln(),
        beta: -1.0 / gamma.ln(),
        t_e1,
        delta_star,
        delta_star_argmin,
    })
}

/// Exact tail of the total visit count to the pair {0, y}: the chance it
/// exceeds u is (1 - gamma_d/(1 + t_y))^u.
pub fn pair_thick_tail(d: u32, y: &[i64], u: u64) -> Result<f64> {
    if d < 3 {
        return Err(Error::BadDimension(d));
    }
    if y.iter().all(|&c| c == 0) {
        return Err(Error::invalid("y", "must be nonzero"));
    }
    let g0 = green_at(d, &vec![0; d as usize])?;
    let t_y = green_at(d, y)? / g0;
    let gamma = 1.0 / g0;
    Ok((1.0 - gamma / (1.0 + t_y)).powf(u as f64))
}

/// Chance that a walk visits its start again at some time in
/// [n, n + horizon), estimated over seeded trials.
pub fn late_return_estimate(
    d: u32,
    n: u64,
    horizon: u64,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if d < 3 || d > crate::lattice::MAX_DIMENSION {
        return Err(Error::BadDimension(d));
    }
    if trials == 0 {
        return Err(Error::invalid("trials", "must be positive"));
    }
    fn run<const D: usize>(n: u64, horizon: u64, trials: u64, seed: u64) -> u64 {
        let mut hits = 0u64;
        for i in 0..trials {
            let mut rng = rng_from_seed(trial_seed(seed, i));
            let mut dirs = DirectionSampler::new(D as u32);
            let mut pos = [0i64; D];
            for _ in 0..n {
                let dir = dirs.next(&mut rng);
                pos[(dir >> 1) as usize] += 1 - 2 * (dir & 1) as i64;
            }
            for _ in 0..horizon {
                let dir = dirs.next(&mut rng);
                pos[(dir >> 1) as usize] += 1 - 2 * (dir & 1) as i64;
                if pos.iter().all(|&c| c == 0) {
                    hits += 1;
                    break;
                }
            }
        }
        hits
    }
    let hits = match d {
        3 => run::<3>(n, horizon, trials, seed),
        4 => run::<4>(n, horizon, trials, seed),
        5 => run::<5>(n, horizon, trials, seed),
        6 => run::<6>(n, horizon, trials, seed),
        7 => run::<7>(n, horizon, trials, seed),
        _ => run::<8>(n, horizon, trials, seed),
    };
    let p = hits as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    Ok((p, se))
}
