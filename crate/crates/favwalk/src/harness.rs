//! Deterministic experiment runner.
//!
//! An experiment names an operation, a trial count and a master seed; trial
//! i runs with a seed hashed from (master, i), so the per-trial record
//! stream is a pure function of the spec regardless of how many worker
//! threads execute it. Records go to JSONL (one line per trial), aggregates
//! to a CSV row whose header is the column manifest; every float is written
//! with twelve significant digits.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::excursion::{scan_random_walk, AnnulusGeometry};
use crate::local_time::MaxTracker;
use crate::mjp::{simulate_mjp_with, MJPParams, DEFAULT_MJP_STEP_CAP};
use crate::rng::trial_seed;
use crate::stats::chi_square_two_sample;
use crate::urn::{simulate_urns, UrnConfig};
use crate::walk::{drive, simulate_walk, Flow, StopRule, DEFAULT_STEP_CAP};
use crate::{decomp, local_time, Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FAVWALK_OUT";

pub const TRIAL_RECORD_SCHEMA: &str = include_str!("../../../schemas/trial_record.json");
pub const EXCURSION_LEDGER_SCHEMA: &str = include_str!("../../../schemas/excursion_ledger.json");

/// Directory that relative output paths resolve against.
pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// One trial's worth of work; the value is the scalar the trial reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialOp {
    /// 1 when the walk leaves the disk of `radius` around the origin
    /// without revisiting it, 0 otherwise.
    EscapeIndicator { dimension: u32, radius: f64 },
    /// Maximal local time after `steps` steps.
    MaxLocalTime { dimension: u32, steps: u64 },
    /// Number of sites attaining the maximal local time after `steps`.
    FavoriteCount { dimension: u32, steps: u64 },
    /// Largest violation of the planar local-time split (always zero).
    DecompositionGap { steps: u64 },
    /// Innermost-level traversal count of a bench-geometry scan.
    ExcursionTopCount { n: usize, base: f64, poly: f64 },
    /// Innermost-level upcrossing count of the matching jump chain.
    MjpTopUpcrossings { n: usize },
    /// Largest occupied label after dropping `balls` balls.
    UrnMaxLevel { probabilities: Vec<f64>, balls: u64 },
    #[cfg(test)]
    Flaky { fail_below: u64 },
}

impl TrialOp {
    pub fn validate(&self) -> Result<()> {
        match self {
            TrialOp::EscapeIndicator { dimension, radius } => {
                check_dimension(*dimension)?;
                if !(*radius >= 2.0) || !radius.is_finite() {
                    return Err(Error::invalid("radius", format!("need at least 2, got {radius}")));
                }
            }
            TrialOp::MaxLocalTime { dimension, steps }
            | TrialOp::FavoriteCount { dimension, steps } => {
                check_dimension(*dimension)?;
                if *steps == 0 {
                    return Err(Error::ZeroSteps);
                }
            }
            TrialOp::DecompositionGap { steps } => {
                if *steps == 0 {
                    return Err(Error::ZeroSteps);
                }
            }
            TrialOp::ExcursionTopCount { n, base, poly } => {
                AnnulusGeometry::desk((0, 0), *n, *base, *poly)?;
            }
            TrialOp::MjpTopUpcrossings { n } => {
                MJPParams::paper(*n)?;
            }
            TrialOp::UrnMaxLevel { probabilities, balls } => {
                UrnConfig::new(probabilities.clone(), *balls, 0)?;
            }
            #[cfg(test)]
            TrialOp::Flaky { .. } => {}
        }
        Ok(())
    }

    fn run(&self, seed: u64, _index: u64) -> Result<f64> {
        match self {
            TrialOp::EscapeIndicator { dimension, radius } => escape_trial(*dimension, *radius, seed),
            TrialOp::MaxLocalTime { dimension, steps } => {
                Ok(tracker_trial(*dimension, *steps, seed)?.0)
            }
            TrialOp::FavoriteCount { dimension, steps } => {
                Ok(tracker_trial(*dimension, *steps, seed)?.1)
            }
            TrialOp::DecompositionGap { steps } => decomposition_trial(*steps, seed),
            TrialOp::ExcursionTopCount { n, base, poly } => {
                let geometry = AnnulusGeometry::desk((0, 0), *n, *base, *poly)?;
                let cap = (geometry.outer * geometry.outer) as u64 * 400;
                let ledger = scan_random_walk(&geometry, geometry.start_on_ring(), seed, cap)?;
                Ok(ledger.counts[*n] as f64)
            }
            TrialOp::MjpTopUpcrossings { n } => {
                let params = MJPParams::paper(*n)?;
                let chain = simulate_mjp_with(&params, seed, 1, false, DEFAULT_MJP_STEP_CAP)?;
                Ok(chain.upcrossings[*n] as f64)
            }
            TrialOp::UrnMaxLevel { probabilities, balls } => {
                let config = UrnConfig::new(probabilities.clone(), *balls, seed)?;
                Ok(simulate_urns(&config)?.max_label as f64)
            }
            #[cfg(test)]
            TrialOp::Flaky { fail_below } => {
                if _index < *fail_below {
                    Err(Error::Invariant("injected failure".into()))
                } else {
                    Ok(1.0)
                }
            }
        }
    }
}

fn check_dimension(d: u32) -> Result<()> {
    if (1..=4).contains(&d) {
        Ok(())
    } else {
        Err(Error::BadDimension(d))
    }
}

fn escape_trial(dimension: u32, radius: f64, seed: u64) -> Result<f64> {
    fn go<const D: usize>(radius: f64, seed: u64) -> Result<f64> {
        let r2 = (radius * radius).floor() as i128;
        let mut returned = false;
        let mut escaped = false;
        let (_, _, stopped) = drive::<D>(seed, [0; D], DEFAULT_STEP_CAP, |t, pos| {
            if t == 0 {
                return Flow::Continue;
            }
            if pos.iter().all(|&c| c == 0) {
                returned = true;
                return Flow::Stop;
            }
            let n2: i128 = pos.iter().map(|&c| (c as i128) * (c as i128)).sum();
            if n2 > r2 {
                escaped = true;
                return Flow::Stop;
            }
            Flow::Continue
        });
        if !stopped {
            return Err(Error::Invariant("escape trial hit the step cap".into()));
        }
        Ok(if escaped && !returned { 1.0 } else { 0.0 })
    }
    match dimension {
        1 => go::<1>(radius, seed),
        2 => go::<2>(radius, seed),
        3 => go::<3>(radius, seed),
        4 => go::<4>(radius, seed),
        d => Err(Error::BadDimension(d)),
    }
}

fn tracker_trial(dimension: u32, steps: u64, seed: u64) -> Result<(f64, f64)> {
    fn go<const D: usize>(steps: u64, seed: u64) -> (f64, f64) {
        let mut tracker = MaxTracker::new();
        drive::<D>(seed, [0; D], steps, |_, pos| {
            tracker.observe(pos);
            Flow::Continue
        });
        (tracker.max() as f64, tracker.favorite_count() as f64)
    }
    match dimension {
        1 => Ok(go::<1>(steps, seed)),
        2 => Ok(go::<2>(steps, seed)),
        3 => Ok(go::<3>(steps, seed)),
        4 => Ok(go::<4>(steps, seed)),
        d => Err(Error::BadDimension(d)),
    }
}

fn decomposition_trial(steps: u64, seed: u64) -> Result<f64> {
    let walk = simulate_walk(2, steps, seed, StopRule::FixedSteps)?;
    let profile = local_time::local_time_profile(&walk, steps)?;
    let view = decomp::decompose(&walk, steps)?;
    let mut gap = 0i64;
    for (site, &xi) in &profile.counts {
        let split = view.xi_tilde(site) + view.xi_lazy(site);
        let split_primed = view.xi_tilde_primed(site) + view.xi_lazy_primed(site);
        gap = gap
            .max((xi as i64 - split as i64).abs())
            .max((xi as i64 - split_primed as i64).abs());
    }
    Ok(gap as f64)
}

/// A named, replayable experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub op: TrialOp,
    pub trials: u64,
    pub master_seed: u64,
    /// JSONL destination; relative paths resolve under the default
    /// output directory.
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::invalid("name", "must be nonempty"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials", "need at least one"));
        }
        self.op.validate()
    }

    /// Hex digest of the canonical JSON form of the spec.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One line of the per-trial stream.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub ok: bool,
    pub value: Option<f64>,
    pub error: Option<String>,
}

/// Order-independent summary of the successful trials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub trials: u64,
    pub ok: u64,
    pub failed: u64,
    pub mean: f64,
    pub variance: f64,
    pub ci95_half: f64,
    /// Split-half homogeneity statistic over integer-valued outcomes,
    /// a cheap replay / stationarity diagnostic.
    pub chi2: Option<f64>,
    pub chi2_df: Option<u64>,
    pub chi2_p: Option<f64>,
}

/// Everything a finished experiment reports.
#[derive(Clone, Debug, Serialize)]
pub struct TrialReport {
    pub spec: ExperimentSpec,
    pub spec_hash: String,
    pub code_version: String,
    pub records: Vec<TrialRecord>,
    pub aggregate: Aggregate,
    pub wall_ms: u128,
}

impl TrialReport {
    /// Recompute the aggregate from the records; equality with the stored
    /// one is an invariant.
    pub fn recompute_aggregate(&self) -> Aggregate {
        aggregate(&self.records)
    }
}

fn aggregate(records: &[TrialRecord]) -> Aggregate {
    let values: Vec<f64> = records.iter().filter_map(|r| r.value).collect();
    let n = values.len() as f64;
    let (mean, variance) = if values.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (mean, var)
    };
    let ci95_half = if values.is_empty() {
        f64::NAN
    } else {
        1.96 * (variance / n).sqrt()
    };

    let integral = !values.is_empty()
        && values
            .iter()
            .all(|&v| v >= 0.0 && v <= 100_000.0 && v.fract() == 0.0);
    let chi = if integral && values.len() >= 40 {
        let top = values.iter().cloned().fold(0.0f64, f64::max) as usize;
        let mut first = vec![0u64; top + 1];
        let mut second = vec![0u64; top + 1];
        let mid = values.len() / 2;
        for (i, &v) in values.iter().enumerate() {
            let h = if i < mid { &mut first } else { &mut second };
            h[v as usize] += 1;
        }
        chi_square_two_sample(&first, &second, 5.0).ok()
    } else {
        None
    };

    Aggregate {
        trials: records.len() as u64,
        ok: values.len() as u64,
        failed: records.len() as u64 - values.len() as u64,
        mean,
        variance,
        ci95_half,
        chi2: chi.as_ref().map(|c| c.statistic),
        chi2_df: chi.as_ref().map(|c| c.df),
        chi2_p: chi.as_ref().map(|c| c.p_value),
    }
}

/// Run every trial of the spec on the current thread pool.
///
/// Trial i is seeded from (master_seed, i); per-trial failures become
/// records with `ok = false` and are excluded from the aggregate. Errors
/// when the spec itself is invalid or every trial failed.
pub fn run_trials(spec: &ExperimentSpec) -> Result<TrialReport> {
    spec.validate()?;
    let start = Instant::now();
    let records: Vec<TrialRecord> = (0..spec.trials)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(spec.master_seed, i);
            match spec.op.run(seed, i) {
                Ok(value) => TrialRecord {
                    trial: i,
                    seed,
                    ok: true,
                    value: Some(value),
                    error: None,
                },
                Err(e) => TrialRecord {
                    trial: i,
                    seed,
                    ok: false,
                    value: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    if records.iter().all(|r| !r.ok) {
        return Err(Error::Invariant(format!(
            "all {} trials of '{}' failed; first error: {}",
            spec.trials,
            spec.name,
            records[0].error.as_deref().unwrap_or("unknown")
        )));
    }
    let aggregate = aggregate(&records);
    Ok(TrialReport {
        spec: spec.clone(),
        spec_hash: spec.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        records,
        aggregate,
        wall_ms: start.elapsed().as_millis(),
    })
}

/// Round to twelve significant digits, the precision of every written float.
pub fn sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap()
}

/// Format a float for CSV output with twelve significant digits.
pub fn csv_float(x: f64) -> String {
    if x.is_nan() {
        return String::new();
    }
    format!("{:.11e}", x)
}

/// The per-trial records as JSONL, one record per line, floats rounded to
/// twelve significant digits. A fixed function of the spec: replays are
/// byte-identical.
pub fn jsonl_string(report: &TrialReport) -> String {
    let mut out = String::new();
    for r in &report.records {
        let rounded = TrialRecord {
            value: r.value.map(sig12),
            error: r.error.clone(),
            ..*r
        };
        out.push_str(&serde_json::to_string(&rounded).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub const AGGREGATE_CSV_HEADER: &str = "name,op,trials,ok,failed,mean,variance,ci95_half,chi2,chi2_df,chi2_p,spec_hash,code_version";

/// One CSV row per report, under the explicit column manifest.
pub fn aggregate_csv(reports: &[TrialReport]) -> String {
    let mut out = String::from(AGGREGATE_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let a = &r.aggregate;
        let op = match serde_json::to_value(&r.spec.op).expect("op serializes") {
            Value::Object(map) => map
                .get("kind")
                .and_then(Value::as_str)
                .unwrap_or("unknown")
                .to_string(),
            _ => "unknown".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.spec.name,
            op,
            a.trials,
            a.ok,
            a.failed,
            csv_float(a.mean),
            csv_float(a.variance),
            csv_float(a.ci95_half),
            a.chi2.map(csv_float).unwrap_or_default(),
            a.chi2_df.map(|d| d.to_string()).unwrap_or_default(),
            a.chi2_p.map(csv_float).unwrap_or_default(),
            r.spec_hash,
            r.code_version,
        ));
    }
    out
}

/// Declarative experiment list, loadable from a TOML config file and
/// mirrored by command-line flags (flags win on conflict).
#[derive(Clone, Debug, Default, Deserialize)]
pub struct ConfigFile {
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub experiment: Vec<ExperimentSpec>,
}

pub fn load_config(text: &str) -> Result<ConfigFile> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

fn type_matches(value: &Value, ty: &str) -> bool {
    match ty {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "boolean" => value.is_boolean(),
        "integer" => value.is_i64() || value.is_u64(),
        "number" => value.is_number(),
        "null" => value.is_null(),
        _ => false,
    }
}

fn check_schema(value: &Value, schema: &Value, schema_name: &str, line: usize) -> Result<()> {
    let violation = |reason: String| Error::SchemaViolation {
        schema: schema_name.to_string(),
        line,
        reason,
    };
    if let Some(ty) = schema.get("type") {
        let ok = match ty {
            Value::String(t) => type_matches(value, t),
            Value::Array(ts) => ts
                .iter()
                .filter_map(Value::as_str)
                .any(|t| type_matches(value, t)),
            _ => false,
        };
        if !ok {
            return Err(violation(format!("value {value} does not match type {ty}")));
        }
    }
    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        for name in required.iter().filter_map(Value::as_str) {
            if value.get(name).is_none() {
                return Err(violation(format!("missing required field '{name}'")));
            }
        }
    }
    if let Some(props) = schema.get("properties").and_then(Value::as_object) {
        if let Some(obj) = value.as_object() {
            for (key, sub) in props {
                if let Some(v) = obj.get(key) {
                    check_schema(v, sub, schema_name, line)?;
                }
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(arr) = value.as_array() {
            for v in arr {
                check_schema(v, items, schema_name, line)?;
            }
        }
    }
    Ok(())
}

/// Validate every line of a JSONL stream against a schema document.
pub fn validate_jsonl(schema_text: &str, content: &str) -> Result<()> {
    let schema: Value =
        serde_json::from_str(schema_text).map_err(|e| Error::Config(format!("bad schema: {e}")))?;
    let name = schema
        .get("title")
        .and_then(Value::as_str)
        .unwrap_or("schema")
        .to_string();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| Error::SchemaViolation {
            schema: name.clone(),
            line: i + 1,
            reason: format!("not valid JSON: {e}"),
        })?;
        check_schema(&value, &schema, &name, i + 1)?;
    }
    Ok(())
}

/// The grid of (name, op) pairs exercised by several reports at once.
pub fn run_grid(specs: &[ExperimentSpec]) -> Result<Vec<TrialReport>> {
    let mut reports = Vec::with_capacity(specs.len());
    for spec in specs {
        reports.push(run_trials(spec)?);
    }
    if reports.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(reports)
}

/// A map of named operations usable from the command line.
pub fn builtin_ops() -> BTreeMap<&'static str, TrialOp> {
    BTreeMap::from([
        (
            "escape3",
            TrialOp::EscapeIndicator {
                dimension: 3,
                radius: 100.0,
            },
        ),
        (
            "max-local-time",
            TrialOp::MaxLocalTime {
                dimension: 2,
                steps: 10_000,
            },
        ),
        (
            "favorite-count",
            TrialOp::FavoriteCount {
                dimension: 2,
                steps: 10_000,
            },
        ),
        ("decomposition-gap", TrialOp::DecompositionGap { steps: 10_000 }),
        (
            "excursion-top",
            TrialOp::ExcursionTopCount {
                n: 3,
                base: 2.0,
                poly: 8.0,
            },
        ),
        ("mjp-top", TrialOp::MjpTopUpcrossings { n: 3 }),
    ])
}
