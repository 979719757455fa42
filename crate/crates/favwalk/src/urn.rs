//! Urn toy models: n balls dropped independently into positively weighted
//! urns, with exact query probabilities by multinomial enumeration and a
//! matching seeded simulator.
//!
//! The infinite urn row is cut at K urns; leftover mass goes to an
//! explicit overflow label K+1 so placement stays a full probability law.
//! Queries never address the overflow label, but the occupied maximum
//! sees it.

use crate::rng::{rng_from_seed, trial_seed};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Ball placement configuration over urns 1..=K.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UrnConfig {
    pub probabilities: Vec<f64>,
    pub balls: u64,
    pub seed: u64,
}

impl UrnConfig {
    pub fn new(probabilities: Vec<f64>, balls: u64, seed: u64) -> Result<Self> {
        let config = UrnConfig {
            probabilities,
            balls,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        validate_probabilities(&self.probabilities)
    }

    pub fn urns(&self) -> usize {
        self.probabilities.len()
    }

    /// Mass on the overflow label K+1.
    pub fn overflow_mass(&self) -> f64 {
        (1.0 - self.probabilities.iter().sum::<f64>()).max(0.0)
    }
}

fn validate_probabilities(probabilities: &[f64]) -> Result<()> {
    if probabilities.is_empty() {
        return Err(Error::invalid("probabilities", "needs at least one urn"));
    }
    if probabilities.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::invalid(
            "probabilities",
            "every urn needs positive mass",
        ));
    }
    let sum: f64 = probabilities.iter().sum();
    if sum > 1.0 + 1e-12 {
        return Err(Error::invalid(
            "probabilities",
            format!("total mass {sum} exceeds 1"),
        ));
    }
    Ok(())
}

/// Result of one placement run. `counts[k]` holds urn k+1 for k < K and
/// the overflow label at index K; `max_label` is the largest occupied
/// label, with 0 as the sentinel when no balls were placed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrnOutcome {
    pub counts: Vec<u64>,
    pub max_label: u64,
}

impl UrnOutcome {
    pub fn check(&self, balls: u64) -> Result<()> {
        let total: u64 = self.counts.iter().sum();
        if total != balls {
            return Err(Error::Invariant(format!(
                "placed {total} of {balls} balls"
            )));
        }
        let expect_max = self
            .counts
            .iter()
            .rposition(|&c| c > 0)
            .map(|i| i as u64 + 1)
            .unwrap_or(0);
        if self.max_label != expect_max {
            return Err(Error::Invariant(format!(
                "max label {} but counts say {expect_max}",
                self.max_label
            )));
        }
        Ok(())
    }
}

fn cumulative(probabilities: &[f64]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(probabilities.len());
    let mut acc = 0.0;
    for &p in probabilities {
        acc += p;
        cum.push(acc);
    }
    cum
}

fn place_all(cum: &[f64], balls: u64, rng: &mut ChaCha8Rng) -> UrnOutcome {
    let mut counts = vec![0u64; cum.len() + 1];
    let mut max_label = 0u64;
    for _ in 0..balls {
        let u: f64 = rng.random();
        let idx = cum.partition_point(|&c| c <= u);
        counts[idx] += 1;
        max_label = max_label.max(idx as u64 + 1);
    }
    UrnOutcome { counts, max_label }
}

/// One seeded placement run.
pub fn simulate_urns(config: &UrnConfig) -> Result<UrnOutcome> {
    config.validate()?;
    let cum = cumulative(&config.probabilities);
    let outcome = place_all(&cum, config.balls, &mut rng_from_seed(config.seed));
    outcome.check(config.balls)?;
    Ok(outcome)
}

/// Queries over the placement law; urn labels are 1-based and never the
/// overflow label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "snake_case")]
pub enum UrnQuery {
    /// P(F_m = h, X_n = m)
    ExactLevel { m: usize, h: u64 },
    /// P(F_m = h | X_n <= m + 1, F_m + F_{m+1} = h_total)
    TopPairConditional { m: usize, h: u64, h_total: u64 },
    /// P(top g-window holds j + 1 balls | X_n = m, top f-window holds
    /// at most `cap`), windows being (m - g, m] and (m - f, m].
    WindowConditional {
        m: usize,
        g: usize,
        f: usize,
        j: u64,
        cap: u64,
    },
}

impl UrnQuery {
    pub fn validate(&self, urns: usize) -> Result<()> {
        match *self {
            UrnQuery::ExactLevel { m, .. } => {
                if m == 0 || m > urns {
                    return Err(Error::invalid("m", format!("label {m} outside 1..={urns}")));
                }
            }
            UrnQuery::TopPairConditional { m, .. } => {
                if m == 0 || m + 1 > urns {
                    return Err(Error::invalid(
                        "m",
                        format!("needs labels {m} and {} inside 1..={urns}", m + 1),
                    ));
                }
            }
            UrnQuery::WindowConditional { m, g, f, .. } => {
                if m == 0 || m > urns {
                    return Err(Error::invalid("m", format!("label {m} outside 1..={urns}")));
                }
                if g == 0 || g >= f || f >= m {
                    return Err(Error::invalid("g", "needs 0 < g < f < m"));
                }
            }
        }
        Ok(())
    }

    /// (joint event, conditioning event) on one outcome; counts are
    /// label-indexed from 1 with the overflow label last.
    fn evaluate(&self, counts: &[u64], max_label: u64) -> (bool, bool) {
        match *self {
            UrnQuery::ExactLevel { m, h } => {
                (counts[m - 1] == h && max_label == m as u64, true)
            }
            UrnQuery::TopPairConditional { m, h, h_total } => {
                let cond =
                    max_label <= m as u64 + 1 && counts[m - 1] + counts[m] == h_total;
                (cond && counts[m - 1] == h, cond)
            }
            UrnQuery::WindowConditional { m, g, f, j, cap } => {
                let sum_g: u64 = (m - g..m).map(|k| counts[k]).sum();
                let sum_f: u64 = (m - f..m).map(|k| counts[k]).sum();
                let cond = max_label == m as u64 && sum_f <= cap;
                (cond && sum_g == j + 1, cond)
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            UrnQuery::ExactLevel { m, h } => format!("exact_level m={m} h={h}"),
            UrnQuery::TopPairConditional { m, h, h_total } => {
                format!("top_pair m={m} h={h} total={h_total}")
            }
            UrnQuery::WindowConditional { m, g, f, j, cap } => {
                format!("window m={m} g={g} f={f} j={j} cap={cap}")
            }
        }
    }
}

fn enumerate_rec<F: FnMut(&[u64], f64)>(
    probs: &[f64],
    idx: usize,
    remaining: u64,
    weight: f64,
    counts: &mut [u64],
    visit: &mut F,
) {
    if idx == probs.len() - 1 {
        counts[idx] = remaining;
        visit(counts, weight * probs[idx].powi(remaining as i32));
        counts[idx] = 0;
        return;
    }
    let mut factor = 1.0f64;
    for c in 0..=remaining {
        counts[idx] = c;
        enumerate_rec(probs, idx + 1, remaining - c, weight * factor, counts, visit);
        factor *= (remaining - c) as f64 / (c + 1) as f64 * probs[idx];
    }
    counts[idx] = 0;
}

/// Exact query probability by multinomial enumeration over the K + 1
/// labels (overflow included), capped at (K+1)^n total outcomes <= 10^7.
pub fn urn_exact_conditional(balls: u64, probabilities: &[f64], query: UrnQuery) -> Result<f64> {
    validate_probabilities(probabilities)?;
    query.validate(probabilities.len())?;
    let labels = probabilities.len() + 1;
    let budget = 10_000_000u64;
    let mut states = 1u64;
    for _ in 0..balls {
        states = states.saturating_mul(labels as u64);
        if states > budget {
            return Err(Error::EnumerationTooLarge { states, budget });
        }
    }
    let mut full = probabilities.to_vec();
    full.push(1.0 - probabilities.iter().sum::<f64>());
    if full[labels - 1] < 0.0 {
        full[labels - 1] = 0.0;
    }
    let mut counts = vec![0u64; labels];
    let mut mass = 0.0;
    let mut cond = 0.0;
    let mut joint = 0.0;
    enumerate_rec(&full, 0, balls, 1.0, &mut counts, &mut |c, w| {
        mass += w;
        let max_label = c
            .iter()
            .rposition(|&v| v > 0)
            .map(|i| i as u64 + 1)
            .unwrap_or(0);
        let (j, in_cond) = query.evaluate(c, max_label);
        if in_cond {
            cond += w;
            if j {
                joint += w;
            }
        }
    });
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::Invariant(format!("enumerated mass {mass}")));
    }
    if cond <= 0.0 {
        return Err(Error::invalid(
            "query",
            "conditioning event has probability zero",
        ));
    }
    Ok(joint / cond)
}

/// The closed form behind the top-pair conditional: each of the h_total
/// balls sitting in {m, m+1} lands in m independently with probability
/// p_m / (p_m + p_{m+1}).
pub fn top_pair_binomial(
    probabilities: &[f64],
    m: usize,
    h: u64,
    h_total: u64,
) -> Result<f64> {
    validate_probabilities(probabilities)?;
    if m == 0 || m + 1 > probabilities.len() {
        return Err(Error::invalid("m", "needs labels m and m+1"));
    }
    if h > h_total {
        return Ok(0.0);
    }
    let q = probabilities[m - 1] / (probabilities[m - 1] + probabilities[m]);
    let mut coeff = 1.0f64;
    for k in 0..h.min(h_total - h) {
        coeff *= (h_total - k) as f64 / (k + 1) as f64;
    }
    Ok(coeff * q.powi(h as i32) * (1.0 - q).powi((h_total - h) as i32))
}

/// Monte Carlo estimate of a query.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct UrnEstimate {
    pub estimate: f64,
    pub hits: u64,
    /// Trials satisfying the conditioning event.
    pub support: u64,
    pub trials: u64,
}

pub fn urn_simulated_conditional(
    config: &UrnConfig,
    query: UrnQuery,
    trials: u64,
) -> Result<UrnEstimate> {
    config.validate()?;
    query.validate(config.urns())?;
    if trials == 0 {
        return Err(Error::invalid("trials", "needs at least one trial"));
    }
    let cum = cumulative(&config.probabilities);
    let mut hits = 0u64;
    let mut support = 0u64;
    for t in 0..trials {
        let mut rng = rng_from_seed(trial_seed(config.seed, t));
        let outcome = place_all(&cum, config.balls, &mut rng);
        let (joint, in_cond) = query.evaluate(&outcome.counts, outcome.max_label);
        if in_cond {
            support += 1;
            if joint {
                hits += 1;
            }
        }
    }
    if support == 0 {
        return Err(Error::EmptySample);
    }
    Ok(UrnEstimate {
        estimate: hits as f64 / support as f64,
        hits,
        support,
        trials,
    })
}
