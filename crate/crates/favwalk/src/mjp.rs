//! Birth-death jump chain mirroring the nested-annuli excursion counts.
//!
//! The chain lives on levels 0..=n+1, is absorbed at 0, steps to a uniform
//! neighbor in the interior, moves up from level n with a small probability
//! and always falls back from n+1. Its level-(l-1) to level-l transition
//! tallies (upcrossings) have an exact negative binomial Markov structure,
//! which makes the chain a tractable stand-in for excursion-count ladders:
//! this module provides the simulator, an exact success-probability solver,
//! and divergence diagnostics against walk-derived counts.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::analytics::negbinom;
use crate::excursion::{scan_random_walk, AnnulusGeometry, SuccessWindows};
use crate::rng::{rng_from_seed, trial_seed};
use crate::samplers::{combined_p_value, skipped_stratum, ConditionalLawReport, StratumReport};
use crate::stats::{chi_square_from_samples, chi_square_two_sample, summarize};
use crate::{Error, Result};
use rand::Rng;

pub const DEFAULT_MJP_STEP_CAP: u64 = 50_000_000;

/// Transition parameters: `top_up` is the probability of the level n to
/// n+1 move; interior levels step up or down with probability 1/2 each.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MJPParams {
    pub n: usize,
    pub top_up: f64,
}

impl MJPParams {
    /// The asymptotic choice 1 / (1 + 3 ln n) for the top transition.
    pub fn paper(n: usize) -> Result<Self> {
        let params = MJPParams {
            n,
            top_up: 1.0 / (1.0 + 3.0 * (n as f64).ln()),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("n", "need at least two levels"));
        }
        if !(self.top_up > 0.0 && self.top_up < 1.0) {
            return Err(Error::invalid(
                "top_up",
                format!("must lie in (0,1), got {}", self.top_up),
            ));
        }
        Ok(())
    }

    /// Probability of stepping down from level l (the success parameter of
    /// the geometric block at l).
    pub fn down_probability(&self, level: usize) -> f64 {
        if level == self.n {
            1.0 - self.top_up
        } else {
            0.5
        }
    }
}

/// One absorbed chain: the visited states (when recorded) and the number of
/// upcrossings into each level; `upcrossings[l-1]` counts the l-1 to l
/// transitions for l = 1..=n+1.
#[derive(Clone, Debug, Serialize)]
pub struct MJPChain {
    pub n: usize,
    pub start_state: u32,
    pub states: Vec<u32>,
    pub upcrossings: Vec<u64>,
}

/// Run one chain to absorption with explicit parameters.
pub fn simulate_mjp_with(
    params: &MJPParams,
    seed: u64,
    start_state: u32,
    record_path: bool,
    step_cap: u64,
) -> Result<MJPChain> {
    params.validate()?;
    let n = params.n;
    if start_state == 0 || start_state as usize > n + 1 {
        return Err(Error::invalid(
            "start_state",
            format!("must lie in 1..={}, got {start_state}", n + 1),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut state = start_state as usize;
    let mut states = Vec::new();
    if record_path {
        states.push(start_state);
    }
    let mut upcrossings = vec![0u64; n + 1];
    let mut jumps = 0u64;
    while state != 0 {
        if jumps >= step_cap {
            return Err(Error::Invariant(format!(
                "chain not absorbed within {step_cap} jumps"
            )));
        }
        let up = if state == n + 1 {
            false
        } else if state == n {
            rng.random_bool(params.top_up)
        } else {
            rng.random_bool(0.5)
        };
        if up {
            upcrossings[state] += 1;
            state += 1;
        } else {
            state -= 1;
        }
        if record_path {
            states.push(state as u32);
        }
        jumps += 1;
    }
    Ok(MJPChain {
        n,
        start_state,
        states,
        upcrossings,
    })
}

/// Run one chain with the asymptotic top transition, keeping the state path.
pub fn simulate_mjp_upcrossings(n: usize, seed: u64, start_state: u32) -> Result<MJPChain> {
    let params = MJPParams::paper(n)?;
    simulate_mjp_with(&params, seed, start_state, true, DEFAULT_MJP_STEP_CAP)
}

const STRATUM_FLOOR: u64 = 300;
const STRATUM_MAX_COUNT: u64 = 8;

/// Check the upcrossing transition law on simulated chains from level 1.
///
/// Given `upcrossings[l] = b`, the next level's tally is a sum of b
/// independent geometric blocks, one per upcrossing, with the level-l down
/// probability as success parameter; the start contributes a single block
/// at level 1. Each populated stratum (l, b) is tested against the matching
/// negative binomial and the statistics are pooled.
pub fn verify_mjp_transitions(n: usize, runs: u64, master_seed: u64) -> Result<ConditionalLawReport> {
    let params = MJPParams::paper(n)?;
    if runs == 0 {
        return Err(Error::invalid("runs", "need at least one"));
    }
    let mut strata: BTreeMap<(usize, u64), Vec<u64>> = BTreeMap::new();
    let mut total_observations = 0u64;
    for t in 0..runs {
        let chain = simulate_mjp_with(
            &params,
            trial_seed(master_seed, t),
            1,
            false,
            DEFAULT_MJP_STEP_CAP,
        )?;
        let u = &chain.upcrossings;
        strata.entry((1, 1)).or_default().push(u[1]);
        total_observations += 1;
        for level in 2..=n {
            let b = u[level - 1];
            if b == 0 {
                if u[level] != 0 {
                    return Err(Error::Invariant(
                        "upcrossings above an unvisited level".into(),
                    ));
                }
                continue;
            }
            if b <= STRATUM_MAX_COUNT {
                strata.entry((level, b)).or_default().push(u[level]);
                total_observations += 1;
            }
        }
    }

    let mut reports = Vec::new();
    let mut combined_chi2 = 0.0;
    let mut combined_df = 0u64;
    for ((level, b), samples) in strata {
        let label = format!("level {level}, {b} block(s)");
        if (samples.len() as u64) < STRATUM_FLOOR {
            reports.push(skipped_stratum(label, samples.len() as u64));
            continue;
        }
        let q = params.down_probability(level);
        let chi = chi_square_from_samples(
            &samples,
            |j| negbinom::pmf_with(b, q, j).unwrap_or(0.0),
            5.0,
        )?;
        combined_chi2 += chi.statistic;
        combined_df += chi.df;
        reports.push(StratumReport {
            stratum: label,
            n_samples: samples.len() as u64,
            chi2: Some(chi.statistic),
            df: chi.df,
            p: Some(chi.p_value),
            skipped: false,
            note: None,
        });
    }
    let combined_p = combined_p_value(combined_chi2, combined_df)?;
    Ok(ConditionalLawReport {
        experiment: format!("jump-chain upcrossing transitions, n={n}"),
        walks: runs,
        capped_walks: 0,
        total_observations,
        strata: reports,
        combined_chi2,
        combined_df,
        combined_p,
    })
}

/// Sample correlation between the tallies one level below and one level
/// above, restricted to chains with a fixed tally at the middle level.
/// The Markov structure makes the exact conditional correlation zero.
pub fn conditional_upcrossing_correlation(
    n: usize,
    level: usize,
    b: u64,
    runs: u64,
    master_seed: u64,
) -> Result<(f64, u64)> {
    if level < 3 || level > n {
        return Err(Error::invalid(
            "level",
            format!("need 3 <= level <= n to have both neighbors, got {level}"),
        ));
    }
    let params = MJPParams::paper(n)?;
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for t in 0..runs {
        let chain = simulate_mjp_with(
            &params,
            trial_seed(master_seed, t),
            1,
            false,
            DEFAULT_MJP_STEP_CAP,
        )?;
        let u = &chain.upcrossings;
        if u[level - 1] == b {
            lo.push(u[level - 2] as f64);
            hi.push(u[level] as f64);
        }
    }
    if lo.len() < 10 {
        return Err(Error::EmptySample);
    }
    let m = lo.len() as f64;
    let mx = lo.iter().sum::<f64>() / m;
    let my = hi.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in lo.iter().zip(&hi) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok((0.0, lo.len() as u64));
    }
    Ok((sxy / (sxx * syy).sqrt(), lo.len() as u64))
}

/// Exact probability that a chain from level 1 keeps every level tally
/// inside the success windows, by dynamic programming over the windows.
///
/// The level-2 tally is a single geometric block; each later level applies
/// the negative binomial kernel restricted to its window; the innermost
/// level integrates the band.
pub fn mjp_success_probability(params: &MJPParams, windows: &SuccessWindows) -> Result<f64> {
    params.validate()?;
    if windows.n != params.n {
        return Err(Error::DimensionMismatch {
            expected: params.n as u32,
            got: windows.n as u32,
        });
    }
    let n = params.n;
    let window = |k: usize| (windows.lows[k - 2], windows.highs[k - 2]);

    let (lo2, hi2) = window(2);
    let q1 = params.down_probability(1);
    let mut weights: Vec<(u64, f64)> = (lo2..=hi2)
        .map(|c| (c, negbinom::pmf_with(1, q1, c).unwrap_or(0.0)))
        .collect();

    for k in 2..n {
        let q = params.down_probability(k);
        let (lo, hi) = window(k + 1);
        let mut next: Vec<(u64, f64)> = (lo..=hi).map(|c| (c, 0.0)).collect();
        for &(c, w) in &weights {
            if w == 0.0 || c == 0 {
                continue;
            }
            for (idx, cp) in (lo..=hi).enumerate() {
                next[idx].1 += w * negbinom::pmf_with(c, q, cp)?;
            }
        }
        weights = next;
    }

    let q_top = params.down_probability(n);
    let mut probability = 0.0;
    for &(c, w) in &weights {
        if w == 0.0 || c == 0 {
            continue;
        }
        probability += w * negbinom::interval_mass_with(c, q_top, windows.band.0, windows.band.1)?;
    }
    Ok(probability)
}

/// Per-level comparison between walk excursion tallies and chain
/// upcrossings.
#[derive(Clone, Debug, Serialize)]
pub struct LevelGap {
    pub level: usize,
    pub walk_mean: f64,
    pub mjp_mean: f64,
    pub walk_variance: f64,
    pub mjp_variance: f64,
    pub relative_gap: f64,
    pub standardized_gap: f64,
    pub chi2: f64,
    pub df: u64,
    pub p: f64,
}

/// Joint diagnostic over the compared levels 2..=n.
#[derive(Clone, Debug, Serialize)]
pub struct DivergenceReport {
    pub n: usize,
    pub walk_samples: u64,
    pub mjp_samples: u64,
    pub rejected_walks: u64,
    pub per_level: Vec<LevelGap>,
    pub combined_chi2: f64,
    pub combined_df: u64,
    pub combined_p: f64,
    pub max_standardized_gap: f64,
}

/// Compare two collections of per-level tallies (levels 2..=n each).
///
/// Reports per-level means, variances, relative and standardized mean gaps,
/// two-sample histogram statistics, and their pooled p-value. Feeding the
/// same collection to both sides yields zero gaps and a vacuous statistic.
pub fn divergence_from_counts(
    walk_counts: &[Vec<u64>],
    mjp_counts: &[Vec<u64>],
    n: usize,
) -> Result<DivergenceReport> {
    if n < 2 {
        return Err(Error::invalid("n", "need at least two levels"));
    }
    if walk_counts.is_empty() || mjp_counts.is_empty() {
        return Err(Error::EmptySample);
    }
    let levels = n - 1;
    for row in walk_counts.iter().chain(mjp_counts) {
        if row.len() != levels {
            return Err(Error::invalid(
                "counts",
                format!("expected {levels} levels per row, got {}", row.len()),
            ));
        }
    }

    let mut per_level = Vec::with_capacity(levels);
    let mut combined_chi2 = 0.0;
    let mut combined_df = 0u64;
    let mut max_gap = 0.0f64;
    for idx in 0..levels {
        let a: Vec<f64> = walk_counts.iter().map(|r| r[idx] as f64).collect();
        let b: Vec<f64> = mjp_counts.iter().map(|r| r[idx] as f64).collect();
        let sa = summarize(&a)?;
        let sb = summarize(&b)?;
        let se = (sa.variance / a.len() as f64 + sb.variance / b.len() as f64).sqrt();
        let standardized = if se > 0.0 {
            (sa.mean - sb.mean) / se
        } else {
            0.0
        };
        let relative = if sb.mean != 0.0 {
            (sa.mean - sb.mean) / sb.mean
        } else {
            0.0
        };
        max_gap = max_gap.max(standardized.abs());

        let top = walk_counts
            .iter()
            .chain(mjp_counts)
            .map(|r| r[idx])
            .max()
            .unwrap() as usize;
        let mut ha = vec![0u64; top + 1];
        let mut hb = vec![0u64; top + 1];
        for r in walk_counts {
            ha[r[idx] as usize] += 1;
        }
        for r in mjp_counts {
            hb[r[idx] as usize] += 1;
        }
        let chi = chi_square_two_sample(&ha, &hb, 5.0)?;
        combined_chi2 += chi.statistic;
        combined_df += chi.df;
        per_level.push(LevelGap {
            level: idx + 2,
            walk_mean: sa.mean,
            mjp_mean: sb.mean,
            walk_variance: sa.variance,
            mjp_variance: sb.variance,
            relative_gap: relative,
            standardized_gap: standardized,
            chi2: chi.statistic,
            df: chi.df,
            p: chi.p_value,
        });
    }
    let combined_p = combined_p_value(combined_chi2, combined_df)?;
    Ok(DivergenceReport {
        n,
        walk_samples: walk_counts.len() as u64,
        mjp_samples: mjp_counts.len() as u64,
        rejected_walks: 0,
        per_level,
        combined_chi2,
        combined_df,
        combined_p,
        max_standardized_gap: max_gap,
    })
}

/// Simulate both sides at matched depth and compare their level tallies.
///
/// Walks start on the outermost level circle and are kept only when they
/// complete exactly one outermost traversal, matching the chain's single
/// initial block at level 1; chains start at level 1. Errors with an empty
/// sample when rejection starves the walk side.
pub fn excursion_vs_mjp_divergence(
    geometry: &AnnulusGeometry,
    walk_samples: u64,
    mjp_samples: u64,
    master_seed: u64,
    step_cap: u64,
) -> Result<DivergenceReport> {
    geometry.validate()?;
    if walk_samples == 0 || mjp_samples == 0 {
        return Err(Error::invalid("samples", "need at least one per side"));
    }
    let n = geometry.n;
    let start = geometry.start_on_ring();
    let mut walk_counts: Vec<Vec<u64>> = Vec::new();
    let mut rejected = 0u64;
    for t in 0..walk_samples {
        let ledger = scan_random_walk(geometry, start, trial_seed(master_seed, 2 * t), step_cap)?;
        if ledger.counts[0] == 1 {
            walk_counts.push(ledger.counts[1..n].to_vec());
        } else {
            rejected += 1;
        }
    }
    if walk_counts.len() < 30 {
        return Err(Error::EmptySample);
    }
    let params = MJPParams::paper(n)?;
    let mut mjp_counts: Vec<Vec<u64>> = Vec::with_capacity(mjp_samples as usize);
    for t in 0..mjp_samples {
        let chain = simulate_mjp_with(
            &params,
            trial_seed(master_seed, 2 * t + 1),
            1,
            false,
            DEFAULT_MJP_STEP_CAP,
        )?;
        mjp_counts.push(chain.upcrossings[1..n].to_vec());
    }
    let mut report = divergence_from_counts(&walk_counts, &mjp_counts, n)?;
    report.rejected_walks = rejected;
    Ok(report)
}

/// Success-probability comparison: splitting estimate on walks against the
/// exact chain value, each with its own geometry-appropriate windows.
#[derive(Clone, Debug, Serialize)]
pub struct SuccessRatio {
    pub n: usize,
    pub walk_probability: f64,
    pub mjp_probability: f64,
    pub ratio: f64,
    pub stage_fractions: Vec<f64>,
    pub particles: usize,
}

/// Estimate the walk success probability by splitting on the given geometry
/// and divide by the exact value for the asymptotic chain at the same depth.
pub fn success_probability_ratio(
    geometry: &AnnulusGeometry,
    delta: f64,
    particles: usize,
    master_seed: u64,
    step_cap: u64,
) -> Result<SuccessRatio> {
    let split = crate::excursion::successful_probability_splitting(
        geometry,
        delta,
        particles,
        master_seed,
        step_cap,
    )?;
    let n = geometry.n;
    let params = MJPParams::paper(n)?;
    let windows = SuccessWindows::new(n, delta, 1.0 / (3.0 * (n as f64).ln()))?;
    let mjp = mjp_success_probability(&params, &windows)?;
    if mjp <= 0.0 {
        return Err(Error::Invariant("chain success probability vanished".into()));
    }
    Ok(SuccessRatio {
        n,
        walk_probability: split.probability,
        mjp_probability: mjp,
        ratio: split.probability / mjp,
        stage_fractions: split.stage_fractions,
        particles: split.particles,
    })
}
