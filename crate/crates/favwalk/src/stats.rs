//! Statistical test utilities: chi-square goodness of fit with tail
//! pooling, binomial confidence intervals, sample summaries, least-squares
//! fits, and a Kolmogorov uniformity check for p-values.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: u64,
    pub p_value: f64,
    pub pooled_bins: usize,
    pub n: u64,
}

/// Chi-square test of observed category counts against probabilities.
///
/// `observed` and `probs` must describe the same support, including any
/// explicit overflow category; probabilities must sum to 1. Adjacent
/// categories are pooled left to right until each pooled bin has expected
/// count at least `min_bin`.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_bin: f64) -> Result<ChiSquare> {
    if observed.len() != probs.len() {
        return Err(Error::invalid("probs", "support length mismatch"));
    }
    if observed.is_empty() {
        return Err(Error::EmptySample);
    }
    let mass: f64 = probs.iter().sum();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("probs", format!("sum {mass} != 1")));
    }
    if probs.iter().any(|&p| p < -1e-15) {
        return Err(Error::invalid("probs", "negative probability"));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::EmptySample);
    }

    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0f64, 0.0f64);
    for (&o, &p) in observed.iter().zip(probs) {
        o_acc += o as f64;
        e_acc += p.max(0.0) * n as f64;
        if e_acc >= min_bin {
            bins.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        if let Some(last) = bins.last_mut() {
            last.0 += o_acc;
            last.1 += e_acc;
        } else {
            bins.push((o_acc, e_acc));
        }
    }

    let statistic: f64 = bins.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    if bins.len() < 2 {
        // Everything pooled into one bin: the test is vacuous and the
        // statistic is exactly zero.
        return Ok(ChiSquare {
            statistic: 0.0,
            df: 0,
            p_value: 1.0,
            pooled_bins: bins.len(),
            n,
        });
    }
    let df = bins.len() as u64 - 1;
    let dist = ChiSquared::new(df as f64)
        .map_err(|e| Error::invalid("df", e.to_string()))?;
    let p_value = 1.0 - dist.cdf(statistic);
    Ok(ChiSquare {
        statistic,
        df,
        p_value,
        pooled_bins: bins.len(),
        n,
    })
}

/// Builds the (counts, probabilities) pair for integer samples against a
/// pmf, with an explicit overflow category holding the residual mass.
pub fn chi_square_from_samples(
    samples: &[u64],
    pmf: impl Fn(u64) -> f64,
    min_bin: f64,
) -> Result<ChiSquare> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let hi = *samples.iter().max().unwrap();
    let mut observed = vec![0u64; hi as usize + 2];
    for &s in samples {
        observed[s as usize] += 1;
    }
    let mut probs: Vec<f64> = (0..=hi).map(&pmf).collect();
    let head: f64 = probs.iter().sum();
    probs.push((1.0 - head).max(0.0));
    chi_square_gof(&observed, &probs, min_bin)
}

/// Two-sample chi-square homogeneity test on aligned category counts.
///
/// Adjacent categories are pooled left to right until the smaller sample's
/// expected count in the pooled column reaches `min_bin`.
pub fn chi_square_two_sample(a: &[u64], b: &[u64], min_bin: f64) -> Result<ChiSquare> {
    if a.len() != b.len() {
        return Err(Error::invalid("b", "support length mismatch"));
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return Err(Error::EmptySample);
    }
    let n = (na + nb) as f64;
    let small = na.min(nb) as f64;
    let mut cols: Vec<(f64, f64)> = Vec::new();
    let (mut aa, mut bb) = (0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        aa += x as f64;
        bb += y as f64;
        if (aa + bb) * small / n >= min_bin {
            cols.push((aa, bb));
            aa = 0.0;
            bb = 0.0;
        }
    }
    if aa > 0.0 || bb > 0.0 {
        if let Some(last) = cols.last_mut() {
            last.0 += aa;
            last.1 += bb;
        } else {
            cols.push((aa, bb));
        }
    }
    if cols.len() < 2 {
        return Ok(ChiSquare {
            statistic: 0.0,
            df: 0,
            p_value: 1.0,
            pooled_bins: cols.len(),
            n: na + nb,
        });
    }
    let mut statistic = 0.0;
    for &(x, y) in &cols {
        let tot = x + y;
        let ea = tot * na as f64 / n;
        let eb = tot * nb as f64 / n;
        statistic += (x - ea) * (x - ea) / ea + (y - eb) * (y - eb) / eb;
    }
    let df = cols.len() as u64 - 1;
    let dist = ChiSquared::new(df as f64)
        .map_err(|e| Error::invalid("df", e.to_string()))?;
    Ok(ChiSquare {
        statistic,
        df,
        p_value: 1.0 - dist.cdf(statistic),
        pooled_bins: cols.len(),
        n: na + nb,
    })
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_ci(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z2 / (4.0 * n)) / n).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub n: u64,
    pub mean: f64,
    pub variance: f64,
    pub sd: f64,
    pub ci95: (f64, f64),
}

/// Sample mean, unbiased variance, and the normal-approximation 95% CI of
/// the mean.
pub fn summarize(xs: &[f64]) -> Result<Summary> {
    if xs.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let variance = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let sd = variance.sqrt();
    let half = 1.96 * sd / n.sqrt();
    Ok(Summary {
        n: xs.len() as u64,
        mean,
        variance,
        sd,
        ci95: (mean - half, mean + half),
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r2: f64,
}

/// Ordinary least squares y = a + b x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<Regression> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::invalid("x", "need at least 3 matched points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("x", "degenerate abscissa"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope_se = (ss_res / (n - 2.0) / sxx).sqrt();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(Regression {
        slope,
        intercept,
        slope_se,
        r2,
    })
}

/// Asymptotic Kolmogorov-Smirnov p-value for uniformity of values in [0,1].
pub fn ks_uniform_p(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let lo = i as f64 / n;
        let hi = (i as f64 + 1.0) / n;
        d = d.max((x - lo).abs()).max((hi - x).abs());
    }
    // Stephens' small-sample adjustment of the Kolmogorov statistic.
    let t = d * (n.sqrt() + 0.12 + 0.11 / n.sqrt());
    let mut p = 0.0;
    for k in 1..101 {
        let term = (-2.0 * (k as f64) * (k as f64) * t * t).exp();
        p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
        if term < 1e-18 {
            break;
        }
    }
    Ok(p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, trial_seed};
    use rand::Rng;

    fn draw(pmf: &[f64], rng: &mut impl Rng) -> u64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, &p) in pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return k as u64;
            }
        }
        pmf.len() as u64 - 1
    }

    #[test]
    fn constant_samples_match_point_mass() {
        let observed = [1000u64];
        let probs = [1.0f64];
        let r = chi_square_gof(&observed, &probs, 5.0).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn detects_wrong_law() {
        let pmf_true = [0.5, 0.3, 0.2];
        let pmf_wrong = [0.2, 0.3, 0.5];
        let mut rng = rng_from_seed(1);
        let samples: Vec<u64> = (0..100_000).map(|_| draw(&pmf_true, &mut rng)).collect();
        let r = chi_square_from_samples(&samples, |k| pmf_wrong[k as usize], 5.0).unwrap();
        assert!(r.p_value < 1e-6, "p = {}", r.p_value);
        let ok = chi_square_from_samples(&samples, |k| pmf_true[k as usize], 5.0).unwrap();
        assert!(ok.p_value > 0.001, "p = {}", ok.p_value);
    }

    #[test]
    fn p_values_uniform_under_null() {
        let pmf = [0.4, 0.25, 0.2, 0.1, 0.05];
        let mut pvals = Vec::new();
        for rep in 0..100 {
            let mut rng = rng_from_seed(trial_seed(77, rep));
            let samples: Vec<u64> = (0..20_000).map(|_| draw(&pmf, &mut rng)).collect();
            let r = chi_square_from_samples(&samples, |k| pmf[k as usize], 5.0).unwrap();
            pvals.push(r.p_value);
        }
        let p = ks_uniform_p(&pvals).unwrap();
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn pooling_respects_min_bin() {
        // Geometric-ish tail forces pooling.
        let probs: Vec<f64> = (0..20).map(|k| 0.5f64.powi(k + 1)).collect();
        let mut probs = probs;
        let head: f64 = probs.iter().sum();
        probs.push(1.0 - head);
        let mut observed = vec![0u64; probs.len()];
        observed[0] = 50;
        observed[1] = 30;
        observed[2] = 20;
        let r = chi_square_gof(&observed, &probs, 5.0).unwrap();
        assert!(r.pooled_bins <= 5);
        assert!(r.p_value >= 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn two_sample_separates_laws() {
        let pmf = [0.5, 0.3, 0.2];
        let shifted = [0.2, 0.3, 0.5];
        let mut rng = rng_from_seed(5);
        let mut count = |law: &[f64]| {
            let mut c = [0u64; 3];
            for _ in 0..40_000 {
                c[draw(law, &mut rng) as usize] += 1;
            }
            c
        };
        let a = count(&pmf);
        let b = count(&pmf);
        let c = count(&shifted);
        let same = chi_square_two_sample(&a, &b, 5.0).unwrap();
        assert!(same.p_value > 0.001, "p = {}", same.p_value);
        let diff = chi_square_two_sample(&a, &c, 5.0).unwrap();
        assert!(diff.p_value < 1e-6, "p = {}", diff.p_value);
        assert!(chi_square_two_sample(&[0, 0], &[1, 2], 5.0).is_err());
    }

    #[test]
    fn wilson_brackets_truth() {
        let (lo, hi) = wilson_ci(660, 1000, 1.96);
        assert!(lo < 0.66 && 0.66 < hi);
        assert!(hi - lo < 0.07);
        assert_eq!(wilson_ci(0, 0, 1.96), (0.0, 1.0));
    }

    #[test]
    fn regression_recovers_line() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let r = linear_fit(&x, &y).unwrap();
        assert!((r.slope + 2.0).abs() < 1e-12);
        assert!((r.intercept - 3.0).abs() < 1e-10);
        assert!(r.r2 > 0.999999);
    }

    #[test]
    fn summary_basics() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-12);
        assert!(s.ci95.0 < 2.5 && 2.5 < s.ci95.1);
        assert!(summarize(&[]).is_err());
    }
}
