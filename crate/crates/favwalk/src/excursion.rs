//! Nested-annuli excursion laboratory on the planar lattice.
//!
//! A geometry fixes a decreasing ladder of radii around a center site
//! together with an outer kill circle. Scanning a path produces, for each
//! adjacent radius pair, the number of completed outer-to-inner traversals
//! before the path first leaves the kill disk, plus the full nested
//! crossing-time bookkeeping for the outermost pair. On top of the counts
//! sits a success indicator (a prescribed growth window per level) and two
//! estimators for its probability: direct Monte Carlo and fixed-effort
//! multilevel splitting for the deep-rarity regime.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{rng_from_seed, trial_seed, DirectionSampler};
use crate::walk::WalkRecord;
use crate::{Error, Result};

/// How the radius ladder is generated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GeometryMode {
    /// Asymptotic ladder: kill radius 16 e^n n^9, level radii e^(n-k) n^9,
    /// innermost n^6. Far outside simulational reach for interesting n;
    /// kept for exactness checks on the derived rates.
    Paper,
    /// Bench-scale ladder: level radii base^(n-k) * poly, innermost poly/2,
    /// kill radius base * (outermost level radius).
    Desk { base: f64, poly: f64 },
}

/// A decreasing ladder of circles around a center, with an outer kill circle.
///
/// `radii[k]` holds the level-k radius for k = 0..=n+1 and is strictly
/// decreasing; `outer` is the kill radius and exceeds `radii[0]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnnulusGeometry {
    pub center: (i64, i64),
    pub n: usize,
    pub radii: Vec<f64>,
    pub outer: f64,
    pub mode: GeometryMode,
}

impl AnnulusGeometry {
    /// Ladder with the asymptotic radii for depth `n`.
    pub fn paper(center: (i64, i64), n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n", "need at least two levels"));
        }
        let nf = n as f64;
        let poly = nf.powi(9);
        let mut radii: Vec<f64> = (0..=n).map(|k| ((n - k) as f64).exp() * poly).collect();
        radii.push(nf.powi(6));
        let geometry = AnnulusGeometry {
            center,
            n,
            radii,
            outer: 16.0 * nf.exp() * poly,
            mode: GeometryMode::Paper,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// Bench-scale ladder: radius base^(n-k) * poly at level k, poly/2 at the
    /// innermost level, kill circle at base times the outermost level radius.
    pub fn desk(center: (i64, i64), n: usize, base: f64, poly: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n", "need at least two levels"));
        }
        if !(base > 1.0) || !base.is_finite() {
            return Err(Error::invalid("base", format!("must exceed 1, got {base}")));
        }
        if !(poly >= 2.0) || !poly.is_finite() {
            return Err(Error::invalid("poly", format!("must be at least 2, got {poly}")));
        }
        let mut radii: Vec<f64> = (0..=n).map(|k| base.powi((n - k) as i32) * poly).collect();
        radii.push(poly / 2.0);
        let geometry = AnnulusGeometry {
            center,
            n,
            radii,
            outer: base * base.powi(n as i32) * poly,
            mode: GeometryMode::Desk { base, poly },
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("n", "need at least two levels"));
        }
        if self.radii.len() != self.n + 2 {
            return Err(Error::invalid(
                "radii",
                format!("expected {} entries, got {}", self.n + 2, self.radii.len()),
            ));
        }
        if !(self.outer > self.radii[0]) {
            return Err(Error::invalid(
                "outer",
                "kill radius must exceed the outermost level radius",
            ));
        }
        for pair in self.radii.windows(2) {
            if !(pair[0] > pair[1]) || !pair[1].is_finite() {
                return Err(Error::invalid(
                    "radii",
                    "ladder must be strictly decreasing and finite",
                ));
            }
        }
        if self.radii[self.n + 1] < 1.0 {
            return Err(Error::invalid(
                "radii",
                "innermost radius must be at least one lattice step",
            ));
        }
        Ok(())
    }

    /// Log-ratio of the outermost annulus width to the innermost one,
    /// ln(r_(n-1)/r_n) / ln(r_n/r_(n+1)). Controls the expected number of
    /// innermost traversals per level-n traversal.
    pub fn top_rate(&self) -> f64 {
        let up = (self.radii[self.n - 1] / self.radii[self.n]).ln();
        let down = (self.radii[self.n] / self.radii[self.n + 1]).ln();
        up / down
    }

    /// A lattice site on the outermost level circle (east of the center).
    pub fn start_on_ring(&self) -> (i64, i64) {
        (self.center.0 + self.radii[1].floor() as i64, self.center.1)
    }
}

/// Crossing times of the outermost annulus pair, nested per excursion.
///
/// `eta[i]` is the i-th arrival on the level-1 circle, `eta_bar[i]` the
/// subsequent arrival on the level-0 circle. Within excursion i, `zeta[i][j]`
/// are arrivals on the level-2 circle and `zeta_bar[i][j]` the returns to the
/// level-1 circle; `z_counts[i]` is the number of completed inner traversals.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CrossingTimes {
    pub eta: Vec<u64>,
    pub eta_bar: Vec<u64>,
    pub zeta: Vec<Vec<u64>>,
    pub zeta_bar: Vec<Vec<u64>>,
    pub z_counts: Vec<u64>,
}

/// Per-level traversal counts plus the nested crossing record for one path.
///
/// `counts[k-1]` is the number of completed level-(k-1)-to-level-k traversals
/// for k = 1..=n+1, all counted before the path left the kill disk. A path
/// that never entered the ladder yields all zeros, which is a valid ledger.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExcursionLedger {
    pub n: usize,
    pub counts: Vec<u64>,
    pub crossings: CrossingTimes,
    pub center_visits: u64,
    pub steps_scanned: u64,
    pub stopped: bool,
}

impl ExcursionLedger {
    /// Structural audit: monotone interleaved crossing times and agreement
    /// between the per-level counters and the nested record.
    pub fn check(&self) -> Result<()> {
        let c = &self.crossings;
        let fail = |what: &str| Err(Error::Invariant(format!("excursion ledger: {what}")));
        if self.counts.len() != self.n + 1 {
            return fail("count vector length");
        }
        if self.counts[0] != c.eta.len() as u64 {
            return fail("level-1 count disagrees with arrival record");
        }
        if c.eta_bar.len() > c.eta.len() || c.eta.len() - c.eta_bar.len() > 1 {
            return fail("unbalanced outer crossing record");
        }
        if c.zeta.len() != c.eta.len() || c.zeta_bar.len() != c.eta.len() {
            return fail("nested record length");
        }
        if c.z_counts.len() != c.eta_bar.len() {
            return fail("inner tally length");
        }
        let inner_total: u64 = c.zeta.iter().map(|g| g.len() as u64).sum();
        if self.n >= 2 && self.counts[1] != inner_total {
            return fail("level-2 count disagrees with nested record");
        }
        for i in 0..c.eta.len() {
            if i > 0 && c.eta[i] <= c.eta_bar[i - 1] {
                return fail("arrival precedes previous departure");
            }
            let complete = i < c.eta_bar.len();
            if complete {
                if c.zeta[i].len() != c.zeta_bar[i].len() {
                    return fail("dangling inner arrival in a completed excursion");
                }
                if c.z_counts[i] != c.zeta_bar[i].len() as u64 {
                    return fail("inner tally disagrees with nested record");
                }
            } else if c.zeta[i].len() < c.zeta_bar[i].len()
                || c.zeta[i].len() - c.zeta_bar[i].len() > 1
            {
                return fail("unbalanced trailing inner record");
            }
            let mut prev = c.eta[i];
            for j in 0..c.zeta[i].len() {
                if c.zeta[i][j] < prev {
                    return fail("inner arrival out of order");
                }
                if j < c.zeta_bar[i].len() {
                    if c.zeta_bar[i][j] <= c.zeta[i][j] {
                        return fail("inner departure out of order");
                    }
                    prev = c.zeta_bar[i][j];
                }
            }
            if complete {
                let last = c.zeta_bar[i].last().copied().unwrap_or(c.eta[i]);
                if c.eta_bar[i] < last {
                    return fail("departure precedes last inner return");
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Phase {
    Seeking,
    Inside { seek_inner: bool },
}

/// Incremental boundary-crossing scanner.
///
/// Feed lattice positions one at a time; per-level counters fire on entering
/// the closed level-k disk and re-arm on reaching the level-(k-1) circle.
/// All membership tests compare squared integer distances, no floats.
#[derive(Clone, Debug)]
pub struct ExcursionScanner {
    n: usize,
    center: (i64, i64),
    kill_center: (i64, i64),
    enter_sq: Vec<i128>,
    arm_sq: Vec<i128>,
    kill_sq: i128,
    armed: Vec<bool>,
    counts: Vec<u64>,
    phase: Phase,
    crossings: CrossingTimes,
    center_visits: u64,
    t: u64,
    stopped: bool,
}

fn dist_sq(a: (i64, i64), b: (i64, i64)) -> i128 {
    let dx = (a.0 - b.0) as i128;
    let dy = (a.1 - b.1) as i128;
    dx * dx + dy * dy
}

fn floor_sq(r: f64) -> i128 {
    (r * r).floor() as i128
}

impl ExcursionScanner {
    pub fn new(geometry: &AnnulusGeometry) -> Self {
        Self::with_kill_center(geometry, geometry.center)
    }

    /// Scanner whose kill circle is centered somewhere other than the ladder
    /// (the ladder sits around `geometry.center`, the stop circle around
    /// `kill_center`).
    pub fn with_kill_center(geometry: &AnnulusGeometry, kill_center: (i64, i64)) -> Self {
        let n = geometry.n;
        let enter_sq: Vec<i128> = (1..=n + 1).map(|k| floor_sq(geometry.radii[k])).collect();
        let arm_sq: Vec<i128> = (1..=n + 1).map(|k| floor_sq(geometry.radii[k - 1])).collect();
        ExcursionScanner {
            n,
            center: geometry.center,
            kill_center,
            enter_sq,
            arm_sq,
            kill_sq: floor_sq(geometry.outer),
            armed: vec![true; n + 1],
            counts: vec![0; n + 1],
            phase: Phase::Seeking,
            crossings: CrossingTimes::default(),
            center_visits: 0,
            t: 0,
            stopped: false,
        }
    }

    /// Observe the position at the next time index. Returns false once the
    /// kill circle has been left; later calls keep returning false.
    pub fn observe(&mut self, x: i64, y: i64) -> bool {
        if self.stopped {
            return false;
        }
        let t = self.t;
        self.t += 1;
        if dist_sq((x, y), self.kill_center) > self.kill_sq {
            self.stopped = true;
            return false;
        }
        let d2 = dist_sq((x, y), self.center);
        if d2 == 0 {
            self.center_visits += 1;
        }
        for k in 0..=self.n {
            if self.armed[k] {
                if d2 <= self.enter_sq[k] {
                    self.armed[k] = false;
                    self.counts[k] += 1;
                }
            } else if d2 >= self.arm_sq[k] {
                self.armed[k] = true;
            }
        }
        match self.phase {
            Phase::Seeking => {
                if d2 <= self.enter_sq[0] {
                    self.crossings.eta.push(t);
                    self.crossings.zeta.push(Vec::new());
                    self.crossings.zeta_bar.push(Vec::new());
                    self.phase = Phase::Inside { seek_inner: true };
                }
            }
            Phase::Inside { seek_inner } => {
                if self.n >= 2 {
                    if seek_inner {
                        if d2 <= self.enter_sq[1] {
                            self.crossings.zeta.last_mut().unwrap().push(t);
                            self.phase = Phase::Inside { seek_inner: false };
                        }
                    } else if d2 >= self.arm_sq[1] {
                        self.crossings.zeta_bar.last_mut().unwrap().push(t);
                        self.phase = Phase::Inside { seek_inner: true };
                    }
                }
                if d2 >= self.arm_sq[0] {
                    self.crossings.eta_bar.push(t);
                    let done = self.crossings.zeta_bar.last().map_or(0, Vec::len);
                    self.crossings.z_counts.push(done as u64);
                    self.phase = Phase::Seeking;
                }
            }
        }
        true
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    pub fn into_ledger(self) -> ExcursionLedger {
        ExcursionLedger {
            n: self.n,
            counts: self.counts,
            crossings: self.crossings,
            center_visits: self.center_visits,
            steps_scanned: self.t,
            stopped: self.stopped,
        }
    }
}

/// Scan a recorded planar walk against a geometry.
///
/// Counting stops at the first exit from the kill disk; if the record ends
/// earlier the ledger is returned with `stopped == false`. A path that never
/// enters the ladder produces an all-zero ledger, which is valid.
pub fn count_excursions(walk: &WalkRecord, geometry: &AnnulusGeometry) -> Result<ExcursionLedger> {
    if walk.dimension != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: walk.dimension,
        });
    }
    geometry.validate()?;
    let mut scanner = ExcursionScanner::new(geometry);
    for p in walk.points()? {
        if !scanner.observe(p[0], p[1]) {
            break;
        }
    }
    let ledger = scanner.into_ledger();
    ledger.check()?;
    Ok(ledger)
}

/// Run a fresh planar walk from `start` and scan it on the fly, stopping at
/// the kill circle. `step_cap` guards against unbounded runs.
pub fn scan_random_walk(
    geometry: &AnnulusGeometry,
    start: (i64, i64),
    seed: u64,
    step_cap: u64,
) -> Result<ExcursionLedger> {
    geometry.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut dirs = DirectionSampler::new(2);
    let mut scanner = ExcursionScanner::new(geometry);
    let (mut x, mut y) = start;
    let mut alive = scanner.observe(x, y);
    let mut steps = 0u64;
    while alive {
        if steps >= step_cap {
            return Err(Error::Invariant(format!(
                "walk did not reach the kill circle within {step_cap} steps"
            )));
        }
        match dirs.next(&mut rng) {
            0 => x += 1,
            1 => x -= 1,
            2 => y += 1,
            _ => y -= 1,
        }
        steps += 1;
        alive = scanner.observe(x, y);
    }
    let ledger = scanner.into_ledger();
    ledger.check()?;
    Ok(ledger)
}

/// Per-level acceptance windows for the success indicator.
///
/// Level 1 must be hit exactly once; level k in 2..=n must satisfy
/// |counts - 2k^2| <= k^(1+delta); the innermost count must land in
/// [(2n^2 - n^(1+delta)) * top_rate, n^3].
#[derive(Clone, Debug)]
pub struct SuccessWindows {
    pub n: usize,
    pub delta: f64,
    pub lows: Vec<u64>,
    pub highs: Vec<u64>,
    pub band: (u64, u64),
}

impl SuccessWindows {
    pub fn new(n: usize, delta: f64, top_rate: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n", "need at least two levels"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0,1), got {delta}")));
        }
        if !(top_rate > 0.0) || !top_rate.is_finite() {
            return Err(Error::invalid("top_rate", format!("must be positive, got {top_rate}")));
        }
        let nf = n as f64;
        let mut lows = Vec::with_capacity(n - 1);
        let mut highs = Vec::with_capacity(n - 1);
        for k in 2..=n {
            let kf = k as f64;
            let half = kf.powf(1.0 + delta);
            let mid = 2.0 * kf * kf;
            lows.push((mid - half).ceil().max(0.0) as u64);
            highs.push((mid + half).floor() as u64);
        }
        let band_low = ((2.0 * nf * nf - nf.powf(1.0 + delta)) * top_rate).ceil().max(0.0) as u64;
        let band_high = (nf.powi(3)).floor() as u64;
        Ok(SuccessWindows {
            n,
            delta,
            lows,
            highs,
            band: (band_low, band_high),
        })
    }

    pub fn satisfied_by(&self, counts: &[u64]) -> bool {
        if counts.len() != self.n + 1 || counts[0] != 1 {
            return false;
        }
        for k in 2..=self.n {
            let c = counts[k - 1];
            if c < self.lows[k - 2] || c > self.highs[k - 2] {
                return false;
            }
        }
        let top = counts[self.n];
        top >= self.band.0 && top <= self.band.1
    }
}

fn success_decision(
    ledger: &ExcursionLedger,
    windows: &SuccessWindows,
    xi_at_center: u64,
    k_n: f64,
    delta_prime: f64,
) -> Result<(bool, bool)> {
    if !ledger.stopped {
        return Err(Error::invalid(
            "ledger",
            "scan must reach the kill circle before the indicator is defined",
        ));
    }
    if ledger.n != windows.n {
        return Err(Error::DimensionMismatch {
            expected: windows.n as u32,
            got: ledger.n as u32,
        });
    }
    if !(delta_prime > windows.delta && delta_prime < 1.0) {
        return Err(Error::invalid(
            "delta_prime",
            format!("must lie in (delta, 1), got {delta_prime}"),
        ));
    }
    if !(k_n > 1.0) || !k_n.is_finite() {
        return Err(Error::invalid("k_n", format!("must exceed 1, got {k_n}")));
    }
    let y = windows.satisfied_by(&ledger.counts);
    let lk = k_n.ln();
    let threshold = (4.0 / std::f64::consts::PI) * lk * lk - lk.powf(1.0 + delta_prime);
    let yp = y && (xi_at_center as f64) >= threshold;
    Ok((y, yp))
}

/// Evaluate the success indicator pair on a completed ledger.
///
/// The first flag asks for exactly one outermost traversal, per-level counts
/// within the polynomial windows, and an innermost count inside the band
/// [(2n^2 - n^(1+delta)) / (3 ln n), n^3]. The second additionally requires
/// the local time at the center up to the kill time to reach
/// (4/pi)(ln K)^2 - (ln K)^(1+delta').
pub fn successful_indicator(
    ledger: &ExcursionLedger,
    n: usize,
    delta: f64,
    xi_at_center: u64,
    k_n: f64,
    delta_prime: f64,
) -> Result<(bool, bool)> {
    let windows = SuccessWindows::new(n, delta, 1.0 / (3.0 * (n as f64).ln()))?;
    success_decision(ledger, &windows, xi_at_center, k_n, delta_prime)
}

/// Same indicator with an explicit innermost-band rate, for geometries whose
/// annulus widths differ from the asymptotic ladder.
pub fn successful_indicator_with_top(
    ledger: &ExcursionLedger,
    n: usize,
    delta: f64,
    top_rate: f64,
    xi_at_center: u64,
    k_n: f64,
    delta_prime: f64,
) -> Result<(bool, bool)> {
    let windows = SuccessWindows::new(n, delta, top_rate)?;
    success_decision(ledger, &windows, xi_at_center, k_n, delta_prime)
}

#[derive(Clone, Debug)]
struct Particle {
    x: i64,
    y: i64,
    scanner: ExcursionScanner,
    rng: ChaCha8Rng,
    dirs: DirectionSampler,
}

enum Fate {
    Reached,
    Dead,
}

struct ParticleEngine<'a> {
    windows: &'a SuccessWindows,
    step_cap: u64,
    total_steps: u64,
}

impl ParticleEngine<'_> {
    /// Advance one particle until it reaches `target` completed traversals at
    /// `level` (1-based), dies (a window is already violated or the kill
    /// circle is hit early), or exhausts the step cap.
    fn run(&mut self, p: &mut Particle, level: usize, target: u64) -> Result<Fate> {
        let mut steps = 0u64;
        loop {
            if self.dead(p) {
                self.total_steps += steps;
                return Ok(Fate::Dead);
            }
            if p.scanner.counts[level - 1] >= target {
                self.total_steps += steps;
                return Ok(Fate::Reached);
            }
            if steps >= self.step_cap {
                return Err(Error::Invariant(format!(
                    "splitting stage exceeded {} steps per particle",
                    self.step_cap
                )));
            }
            match p.dirs.next(&mut p.rng) {
                0 => p.x += 1,
                1 => p.x -= 1,
                2 => p.y += 1,
                _ => p.y -= 1,
            }
            steps += 1;
            if !p.scanner.observe(p.x, p.y) {
                self.total_steps += steps;
                return Ok(Fate::Dead);
            }
        }
    }

    /// A particle is beyond saving once any monotone counter has left its
    /// window from above, or the single outermost traversal has repeated.
    fn dead(&self, p: &Particle) -> bool {
        let counts = &p.scanner.counts;
        if counts[0] > 1 {
            return true;
        }
        for k in 2..=self.windows.n {
            if counts[k - 1] > self.windows.highs[k - 2] {
                return true;
            }
        }
        counts[self.windows.n] > self.windows.band.1
    }
}

/// Fixed-effort splitting estimate of the success probability.
#[derive(Clone, Debug, Serialize)]
pub struct SplittingEstimate {
    pub probability: f64,
    pub stage_fractions: Vec<f64>,
    pub stage_targets: Vec<(usize, u64)>,
    pub particles: usize,
    pub final_successes: usize,
    pub total_steps: u64,
}

fn spawn(geometry: &AnnulusGeometry, seed: u64) -> Particle {
    let (x, y) = geometry.start_on_ring();
    let mut scanner = ExcursionScanner::new(geometry);
    scanner.observe(x, y);
    Particle {
        x,
        y,
        scanner,
        rng: rng_from_seed(seed),
        dirs: DirectionSampler::new(2),
    }
}

/// Estimate the probability that a walk started on the outermost level
/// circle satisfies the success windows at its kill time, by multilevel
/// splitting with a fixed population per stage.
///
/// Stage events ask each level in turn to reach the lower edge of its window;
/// these are monotone in time, so each stage event contains the next and the
/// product of stage survival fractions estimates the target probability.
/// Survivors are cloned round-robin with fresh random streams. The walk
/// position plus scanner state is a full description of the future law, so
/// the only bias is finite-population resampling noise.
pub fn successful_probability_splitting(
    geometry: &AnnulusGeometry,
    delta: f64,
    particles: usize,
    master_seed: u64,
    step_cap: u64,
) -> Result<SplittingEstimate> {
    geometry.validate()?;
    if particles < 2 {
        return Err(Error::invalid("particles", "need at least two"));
    }
    let windows = SuccessWindows::new(geometry.n, delta, geometry.top_rate())?;
    let mut stage_targets: Vec<(usize, u64)> = (2..=geometry.n)
        .map(|k| (k, windows.lows[k - 2]))
        .collect();
    stage_targets.push((geometry.n + 1, windows.band.0));

    let mut stream = 0u64;
    let fresh = |stream: &mut u64| {
        let s = trial_seed(master_seed, *stream);
        *stream += 1;
        s
    };
    let mut population: Vec<Particle> = (0..particles)
        .map(|_| spawn(geometry, fresh(&mut stream)))
        .collect();
    let mut engine = ParticleEngine {
        windows: &windows,
        step_cap,
        total_steps: 0,
    };

    let mut stage_fractions = Vec::with_capacity(stage_targets.len());
    let mut probability = 1.0f64;
    for &(level, target) in &stage_targets {
        let mut survivors: Vec<Particle> = Vec::new();
        for mut p in population.drain(..) {
            if matches!(engine.run(&mut p, level, target)?, Fate::Reached) {
                survivors.push(p);
            }
        }
        let fraction = survivors.len() as f64 / particles as f64;
        stage_fractions.push(fraction);
        probability *= fraction;
        if survivors.is_empty() {
            return Ok(SplittingEstimate {
                probability: 0.0,
                stage_fractions,
                stage_targets,
                particles,
                final_successes: 0,
                total_steps: engine.total_steps,
            });
        }
        population = (0..particles)
            .map(|i| {
                let mut p = survivors[i % survivors.len()].clone();
                p.rng = rng_from_seed(fresh(&mut stream));
                p.dirs = DirectionSampler::new(2);
                p
            })
            .collect();
    }

    // Stage events only bound counters from below; run the survivors to the
    // kill circle and apply the full two-sided windows. An unreachable
    // target turns the engine into a plain run-to-absorption loop.
    let mut final_successes = 0usize;
    for mut p in population.drain(..) {
        engine.run(&mut p, 1, u64::MAX)?;
        if p.scanner.stopped() && windows.satisfied_by(p.scanner.counts()) {
            final_successes += 1;
        }
    }
    let final_fraction = final_successes as f64 / particles as f64;
    Ok(SplittingEstimate {
        probability: probability * final_fraction,
        stage_fractions,
        stage_targets,
        particles,
        final_successes,
        total_steps: engine.total_steps,
    })
}

/// Direct Monte Carlo estimate of the same success probability.
#[derive(Clone, Debug, Serialize)]
pub struct DirectEstimate {
    pub probability: f64,
    pub successes: u64,
    pub trials: u64,
    pub total_steps: u64,
}

/// Plain Monte Carlo over independent walks from the outermost level circle;
/// usable when the success probability is within reach of the trial budget.
pub fn successful_probability_direct(
    geometry: &AnnulusGeometry,
    delta: f64,
    trials: u64,
    master_seed: u64,
    step_cap: u64,
) -> Result<DirectEstimate> {
    geometry.validate()?;
    if trials == 0 {
        return Err(Error::invalid("trials", "need at least one"));
    }
    let windows = SuccessWindows::new(geometry.n, delta, geometry.top_rate())?;
    let start = geometry.start_on_ring();
    let mut successes = 0u64;
    let mut total_steps = 0u64;
    for t in 0..trials {
        let ledger = scan_random_walk(geometry, start, trial_seed(master_seed, t), step_cap)?;
        total_steps += ledger.steps_scanned;
        if windows.satisfied_by(&ledger.counts) {
            successes += 1;
        }
    }
    Ok(DirectEstimate {
        probability: successes as f64 / trials as f64,
        successes,
        trials,
        total_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::green::{hitting_probability, HittingQuery};
    use crate::walk::{simulate_walk_with, StopRule, WalkParams};

    #[test]
    fn paper_geometry_matches_the_asymptotic_ladder() {
        let g = AnnulusGeometry::paper((0, 0), 3).unwrap();
        let p9 = 3f64.powi(9);
        assert_eq!(g.radii.len(), 5);
        assert!((g.outer - 16.0 * 3f64.exp() * p9).abs() < 1e-6);
        for k in 0..=3usize {
            assert!((g.radii[k] - ((3 - k) as f64).exp() * p9).abs() < 1e-6);
        }
        assert!((g.radii[4] - 3f64.powi(6)).abs() < 1e-9);
        let expect = 1.0 / (3.0 * 3f64.ln());
        assert!((g.top_rate() - expect).abs() < 1e-12);
    }

    #[test]
    fn desk_geometry_rejects_bad_parameters() {
        assert!(AnnulusGeometry::desk((0, 0), 1, 2.0, 8.0).is_err());
        assert!(AnnulusGeometry::desk((0, 0), 3, 1.0, 8.0).is_err());
        assert!(AnnulusGeometry::desk((0, 0), 3, 2.0, 1.0).is_err());
        let g = AnnulusGeometry::desk((5, -2), 3, 2.0, 8.0).unwrap();
        assert_eq!(g.radii, vec![64.0, 32.0, 16.0, 8.0, 4.0]);
        assert!((g.outer - 128.0).abs() < 1e-12);
        assert!((g.top_rate() - 1.0).abs() < 1e-12);
        assert_eq!(g.start_on_ring(), (37, -2));
    }

    #[test]
    fn path_that_never_enters_the_ladder_yields_all_zeros() {
        let g = AnnulusGeometry::desk((20, 0), 2, 2.0, 4.0).unwrap();
        let mut scanner = ExcursionScanner::new(&g);
        // Ten-step stroll near the origin: inside the kill disk around
        // (20,0) (radius 32) but never within 16 of the ladder center.
        let path = [(0, 0), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0)];
        for (x, y) in path {
            assert!(scanner.observe(x, y));
        }
        let ledger = scanner.into_ledger();
        ledger.check().unwrap();
        assert_eq!(ledger.counts, vec![0, 0, 0]);
        assert!(!ledger.stopped);
        assert_eq!(ledger.steps_scanned, 10);
    }

    #[test]
    fn straight_line_through_the_ladder_counts_one_per_level() {
        let g = AnnulusGeometry::desk((0, 0), 3, 2.0, 8.0).unwrap();
        let mut scanner = ExcursionScanner::new(&g);
        let mut alive = true;
        // Walk in along the axis to the center, then straight out until the
        // kill circle (radius 128) is crossed.
        let mut xs: Vec<i64> = (0..=70).map(|i| 70 - i).collect();
        xs.extend(1..=129);
        for x in xs {
            alive = scanner.observe(x, 0);
            if !alive {
                break;
            }
        }
        assert!(!alive);
        let ledger = scanner.into_ledger();
        ledger.check().unwrap();
        assert!(ledger.stopped);
        assert_eq!(ledger.counts, vec![1, 1, 1, 1]);
        assert_eq!(ledger.center_visits, 1);
        assert_eq!(ledger.crossings.z_counts, vec![1]);
        assert_eq!(ledger.crossings.eta, vec![38]);
        assert_eq!(ledger.crossings.zeta, vec![vec![54]]);
        assert_eq!(ledger.crossings.zeta_bar, vec![vec![102]]);
        assert_eq!(ledger.crossings.eta_bar, vec![134]);
    }

    #[test]
    fn scan_agrees_with_a_naive_crossing_counter() {
        let g = AnnulusGeometry::desk((3, 1), 3, 2.0, 8.0).unwrap();
        let mut params = WalkParams::fixed(2, 0, 4242);
        params.stop_rule = StopRule::ExitDisk { radius: 200.0 };
        let walk = simulate_walk_with(&params).unwrap();
        let ledger = count_excursions(&walk, &g).unwrap();

        // Independent recount: for each level, walk the path and count
        // armed entries into the closed level disk, stopping at the first
        // point outside the kill disk around the ladder center.
        let kill = floor_sq(g.outer);
        for k in 1..=g.n + 1 {
            let enter = floor_sq(g.radii[k]);
            let arm = floor_sq(g.radii[k - 1]);
            let mut armed = true;
            let mut hits = 0u64;
            for p in walk.points().unwrap() {
                let d2 = dist_sq((p[0], p[1]), g.center);
                if d2 > kill {
                    break;
                }
                if armed && d2 <= enter {
                    armed = false;
                    hits += 1;
                } else if !armed && d2 >= arm {
                    armed = true;
                }
            }
            assert_eq!(ledger.counts[k - 1], hits, "level {k}");
        }
    }

    #[test]
    fn mean_inner_counts_track_the_harmonic_solve() {
        // Conditional on b crossings of the middle annulus, the next level
        // in is hit Binomial-like with mean b p/(1-p), where p is the exact
        // probability that a walk from the middle circle reaches the inner
        // circle before the outer one.
        let g = AnnulusGeometry::desk((0, 0), 3, 2.0, 8.0).unwrap();
        let p = hitting_probability(
            &HittingQuery::InnerBeforeOuter {
                r: 8.0,
                big_r: 32.0,
                x: (16, 0),
            },
            0.0,
        )
        .unwrap()
        .exact
        .unwrap();
        let ratio = p / (1.0 - p);

        let start = g.start_on_ring();
        let mut by_b: crate::hash::FxHashMap<u64, (u64, u64)> = Default::default();
        for t in 0..6000u64 {
            let ledger = scan_random_walk(&g, start, trial_seed(606, t), 20_000_000).unwrap();
            let entry = by_b.entry(ledger.counts[1]).or_insert((0, 0));
            entry.0 += 1;
            entry.1 += ledger.counts[2];
        }
        let mut checked = 0;
        for (b, (n_obs, total)) in by_b {
            if b == 0 || n_obs < 250 {
                continue;
            }
            let mean = total as f64 / n_obs as f64;
            let predicted = b as f64 * ratio;
            assert!(
                (mean - predicted).abs() / predicted < 0.15,
                "b={b}: mean {mean:.3} vs {predicted:.3}"
            );
            checked += 1;
        }
        assert!(checked >= 2, "too few populated strata: {checked}");
    }

    #[test]
    fn indicator_rejects_incomplete_ledgers_and_all_zero_counts() {
        let g = AnnulusGeometry::desk((20, 0), 2, 2.0, 4.0).unwrap();
        let mut scanner = ExcursionScanner::new(&g);
        scanner.observe(0, 0);
        let open = scanner.into_ledger();
        assert!(successful_indicator(&open, 2, 0.2, 0, 64.0, 0.6).is_err());

        let mut scanner = ExcursionScanner::new(&g);
        scanner.observe(0, 0);
        assert!(!scanner.observe(53, 0));
        let ledger = scanner.into_ledger();
        assert!(ledger.stopped);
        let (y, yp) = successful_indicator(&ledger, 2, 0.2, 10_000, 64.0, 0.6).unwrap();
        assert!(!y && !yp);
    }

    #[test]
    fn indicator_accepts_a_compliant_count_profile() {
        let n = 6usize;
        let mut ledger = ExcursionLedger {
            n,
            counts: vec![1, 8, 18, 32, 50, 72, 20],
            crossings: CrossingTimes::default(),
            center_visits: 0,
            steps_scanned: 0,
            stopped: true,
        };
        let k_n = 16.0 * (n as f64).exp() * (n as f64).powi(9);
        let lk = k_n.ln();
        let threshold = (4.0 / std::f64::consts::PI) * lk * lk - lk.powf(1.0 + 0.6);
        assert!(threshold > 600.0 && threshold < 640.0);

        let (y, yp) = successful_indicator(&ledger, n, 0.2, 700, k_n, 0.6).unwrap();
        assert!(y && yp);
        let (y, yp) = successful_indicator(&ledger, n, 0.2, 100, k_n, 0.6).unwrap();
        assert!(y && !yp);

        // Violating any single window kills the first flag.
        let good = ledger.counts.clone();
        for (idx, bad) in [(0usize, 2u64), (1, 3), (5, 200), (6, 0)] {
            ledger.counts = good.clone();
            ledger.counts[idx] = bad;
            let (y, _) = successful_indicator(&ledger, n, 0.2, 700, k_n, 0.6).unwrap();
            assert!(!y, "window {idx} should have failed");
        }
    }

    #[test]
    fn window_parameters_are_validated() {
        assert!(SuccessWindows::new(1, 0.2, 1.0).is_err());
        assert!(SuccessWindows::new(4, 0.0, 1.0).is_err());
        assert!(SuccessWindows::new(4, 1.0, 1.0).is_err());
        assert!(SuccessWindows::new(4, 0.2, 0.0).is_err());
        let w = SuccessWindows::new(4, 0.2, 1.0).unwrap();
        assert_eq!(w.lows, vec![6, 15, 27]);
        assert_eq!(w.highs, vec![10, 21, 37]);
        assert_eq!(w.band, (27, 64));
        assert!(w.satisfied_by(&[1, 8, 18, 32, 30]));
        assert!(!w.satisfied_by(&[1, 8, 18, 32, 65]));
        assert!(!w.satisfied_by(&[0, 8, 18, 32, 30]));
    }

    #[test]
    fn splitting_agrees_with_direct_monte_carlo_at_easy_scale() {
        let g = AnnulusGeometry::desk((0, 0), 3, 2.0, 4.0).unwrap();
        let delta = 0.8;
        let direct =
            successful_probability_direct(&g, delta, 150_000, 7001, 20_000_000).unwrap();
        assert!(direct.successes >= 40, "direct successes {}", direct.successes);
        let split = successful_probability_splitting(&g, delta, 2000, 7002, 20_000_000).unwrap();
        assert!(split.probability > 0.0);
        let ratio = split.probability / direct.probability;
        assert!(
            (0.5..=2.0).contains(&ratio),
            "splitting {:.3e} vs direct {:.3e}",
            split.probability,
            direct.probability
        );
    }
}
