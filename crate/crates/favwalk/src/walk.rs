//! Simple random walk simulation on `Z^d`.
//!
//! The hot loop is monomorphized per dimension and reports each visited
//! position to a caller-supplied visitor, so stop rules and bookkeeping
//! (local times, crossing scans) never cost more than they use.

use crate::lattice::{LatticePoint, COORD_LIMIT, MAX_DIMENSION};
use crate::rng::{rng_from_seed, DirectionSampler};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_STEP_CAP: u64 = 1_000_000_000;

/// When to stop a simulated walk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopRule {
    /// Exactly `steps` steps.
    FixedSteps,
    /// First exit from the closed Euclidean disk of this radius around the start.
    ExitDisk { radius: f64 },
    /// First time some site's local time reaches this level.
    LocalTimeLevel { level: u64 },
}

/// Parameters of one simulated walk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WalkParams {
    pub dimension: u32,
    /// Step count for `FixedSteps`; ignored by the other rules.
    pub steps: u64,
    pub seed: u64,
    pub stop_rule: StopRule,
    /// Budget for open-ended stop rules.
    pub step_cap: u64,
    pub retain_path: bool,
    pub start: LatticePoint,
}

impl WalkParams {
    pub fn fixed(dimension: u32, steps: u64, seed: u64) -> Self {
        WalkParams {
            dimension,
            steps,
            seed,
            stop_rule: StopRule::FixedSteps,
            step_cap: DEFAULT_STEP_CAP,
            retain_path: true,
            start: LatticePoint::origin(dimension),
        }
    }
}

/// A finished (or capped) walk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WalkRecord {
    pub dimension: u32,
    pub seed: u64,
    /// Number of steps taken; the path has `length + 1` points.
    pub length: u64,
    pub start: LatticePoint,
    pub end: LatticePoint,
    /// Flat row-major coordinates, `(length + 1) * dimension` entries,
    /// present only when the walk retained its path.
    pub path: Option<Vec<i64>>,
    pub stop_rule: StopRule,
    pub stop_satisfied: bool,
}

impl WalkRecord {
    pub fn point(&self, t: u64) -> Result<LatticePoint> {
        let path = self.path.as_ref().ok_or(Error::PathNotRetained)?;
        let d = self.dimension as usize;
        let i = t as usize * d;
        if t > self.length {
            return Err(Error::invalid("t", format!("{t} > length {}", self.length)));
        }
        Ok(LatticePoint(path[i..i + d].to_vec()))
    }

    /// Coordinate slices of the retained path, one per time point.
    pub fn points(&self) -> Result<impl Iterator<Item = &[i64]>> {
        let path = self.path.as_ref().ok_or(Error::PathNotRetained)?;
        Ok(path.chunks_exact(self.dimension as usize))
    }

    /// Checks the nearest-neighbor structure of the retained path.
    pub fn validate(&self) -> Result<()> {
        let d = self.dimension as usize;
        let path = self.path.as_ref().ok_or(Error::PathNotRetained)?;
        if path.len() != (self.length as usize + 1) * d {
            return Err(Error::Invariant("path length mismatch".into()));
        }
        if path[..d] != self.start.0[..] {
            return Err(Error::Invariant("path[0] != start".into()));
        }
        for w in path.chunks_exact(d).collect::<Vec<_>>().windows(2) {
            let dist: u64 = w[0]
                .iter()
                .zip(w[1])
                .map(|(&a, &b)| a.abs_diff(b))
                .sum();
            if dist != 1 {
                return Err(Error::Invariant("non unit step".into()));
            }
        }
        Ok(())
    }
}

/// What a step visitor tells the driver.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Flow {
    Continue,
    Stop,
}

/// Runs the walk loop, reporting every position (including the start at
/// time 0) to `visit`. Returns `(time, position, stopped)` where `stopped`
/// says the visitor requested the stop before the cap.
pub fn drive<const D: usize>(
    seed: u64,
    start: [i64; D],
    cap: u64,
    mut visit: impl FnMut(u64, &[i64; D]) -> Flow,
) -> (u64, [i64; D], bool) {
    let mut rng = rng_from_seed(seed);
    let mut dirs = DirectionSampler::new(D as u32);
    let mut pos = start;
    if visit(0, &pos) == Flow::Stop {
        return (0, pos, true);
    }
    for t in 1..=cap {
        let dir = dirs.next(&mut rng);
        let axis = (dir >> 1) as usize;
        pos[axis] += 1 - 2 * (dir & 1) as i64;
        if visit(t, &pos) == Flow::Stop {
            return (t, pos, true);
        }
    }
    (cap, pos, false)
}

fn check_overflow_margin<const D: usize>(start: &[i64; D], cap: u64) -> Result<()> {
    for &c in start {
        if (c.unsigned_abs()).saturating_add(cap) >= COORD_LIMIT as u64 {
            return Err(Error::CoordinateOverflow);
        }
    }
    Ok(())
}

fn start_array<const D: usize>(p: &LatticePoint) -> [i64; D] {
    let mut a = [0i64; D];
    a.copy_from_slice(p.coords());
    a
}

fn run<const D: usize>(params: &WalkParams) -> Result<WalkRecord> {
    let cap = match params.stop_rule {
        StopRule::FixedSteps => params.steps,
        _ => params.step_cap,
    };
    let start = start_array::<D>(&params.start);
    check_overflow_margin(&start, cap)?;

    let mut path: Vec<i64> = Vec::new();
    if params.retain_path && matches!(params.stop_rule, StopRule::FixedSteps) {
        path.reserve((cap as usize + 1) * D);
    }
    let retain = params.retain_path;

    let (length, end, stopped) = match params.stop_rule {
        StopRule::FixedSteps => drive::<D>(params.seed, start, cap, |_, p| {
            if retain {
                path.extend_from_slice(p);
            }
            Flow::Continue
        }),
        StopRule::ExitDisk { radius } => {
            if !(radius > 0.0) || !radius.is_finite() {
                return Err(Error::invalid("radius", "must be positive and finite"));
            }
            let r2 = (radius * radius).floor() as u128;
            drive::<D>(params.seed, start, cap, |_, p| {
                if retain {
                    path.extend_from_slice(p);
                }
                let n2: u128 = p
                    .iter()
                    .zip(&start)
                    .map(|(&a, &s)| {
                        let d = (a - s) as i128;
                        (d * d) as u128
                    })
                    .sum();
                if n2 > r2 {
                    Flow::Stop
                } else {
                    Flow::Continue
                }
            })
        }
        StopRule::LocalTimeLevel { level } => {
            if level == 0 {
                return Err(Error::invalid("level", "must be at least 1"));
            }
            let mut counts: crate::hash::FxHashMap<[i64; D], u64> =
                crate::hash::FxHashMap::default();
            drive::<D>(params.seed, start, cap, |_, p| {
                if retain {
                    path.extend_from_slice(p);
                }
                let c = counts.entry(*p).or_insert(0);
                *c += 1;
                if *c >= level {
                    Flow::Stop
                } else {
                    Flow::Continue
                }
            })
        }
    };

    let record = WalkRecord {
        dimension: D as u32,
        seed: params.seed,
        length,
        start: params.start.clone(),
        end: LatticePoint(end.to_vec()),
        path: if retain { Some(path) } else { None },
        stop_rule: params.stop_rule,
        stop_satisfied: match params.stop_rule {
            StopRule::FixedSteps => true,
            _ => stopped,
        },
    };

    if !record.stop_satisfied {
        return Err(Error::CappedRun {
            cap,
            partial: Box::new(record),
        });
    }
    Ok(record)
}

/// Simulates a walk from the given parameters.
pub fn simulate_walk_with(params: &WalkParams) -> Result<WalkRecord> {
    let d = params.dimension;
    if d == 0 || d > MAX_DIMENSION {
        return Err(Error::BadDimension(d));
    }
    if params.start.dimension() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: params.start.dimension(),
        });
    }
    match d {
        1 => run::<1>(params),
        2 => run::<2>(params),
        3 => run::<3>(params),
        4 => run::<4>(params),
        5 => run::<5>(params),
        6 => run::<6>(params),
        7 => run::<7>(params),
        8 => run::<8>(params),
        _ => unreachable!(),
    }
}

/// Simulates a walk started at the origin with a retained path.
pub fn simulate_walk(dimension: u32, steps: u64, seed: u64, stop_rule: StopRule) -> Result<WalkRecord> {
    let mut params = WalkParams::fixed(dimension, steps, seed);
    params.stop_rule = stop_rule;
    simulate_walk_with(&params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_walk_is_single_point() {
        let w = simulate_walk(1, 0, 7, StopRule::FixedSteps).unwrap();
        assert_eq!(w.length, 0);
        assert_eq!(w.path.as_deref(), Some(&[0i64][..]));
        assert_eq!(w.end, LatticePoint::origin(1));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = simulate_walk(2, 1_000_000, 42, StopRule::FixedSteps).unwrap();
        let b = simulate_walk(2, 1_000_000, 42, StopRule::FixedSteps).unwrap();
        assert_eq!(a.path, b.path);
        let c = simulate_walk(2, 1_000_000, 43, StopRule::FixedSteps).unwrap();
        assert_ne!(a.path, c.path);
    }

    #[test]
    fn paths_are_nearest_neighbor() {
        for seed in 0..5 {
            let w = simulate_walk(3, 10_000, seed, StopRule::FixedSteps).unwrap();
            w.validate().unwrap();
        }
    }

    #[test]
    fn exit_disk_stops_just_outside() {
        for seed in 0..20 {
            let w = simulate_walk(2, 0, seed, StopRule::ExitDisk { radius: 10.0 }).unwrap();
            assert!(w.stop_satisfied);
            assert!(w.end.norm2() > 100);
            let prev = w.point(w.length - 1).unwrap();
            assert!(prev.norm2() <= 100);
        }
    }

    #[test]
    fn local_time_level_stops_at_level() {
        for seed in 0..10 {
            let w =
                simulate_walk(2, 0, seed, StopRule::LocalTimeLevel { level: 5 }).unwrap();
            let field = crate::local_time::local_time_profile(&w, w.length).unwrap();
            assert_eq!(field.max_value, 5);
            let before = crate::local_time::local_time_profile(&w, w.length - 1).unwrap();
            assert_eq!(before.max_value, 4);
        }
    }

    #[test]
    fn cap_produces_partial_record() {
        let mut params = WalkParams::fixed(2, 0, 9);
        params.stop_rule = StopRule::LocalTimeLevel { level: 1_000_000 };
        params.step_cap = 1000;
        match simulate_walk_with(&params) {
            Err(Error::CappedRun { cap, partial }) => {
                assert_eq!(cap, 1000);
                assert_eq!(partial.length, 1000);
                assert!(!partial.stop_satisfied);
            }
            other => panic!("expected capped run, got {other:?}"),
        }
    }

    #[test]
    fn streamed_walk_has_no_path() {
        let mut params = WalkParams::fixed(2, 1000, 3);
        params.retain_path = false;
        let w = simulate_walk_with(&params).unwrap();
        assert!(w.path.is_none());
        assert!(matches!(w.point(0), Err(Error::PathNotRetained)));
    }

    #[test]
    fn rejects_bad_dimension() {
        assert!(matches!(
            simulate_walk(0, 10, 1, StopRule::FixedSteps),
            Err(Error::BadDimension(0))
        ));
        assert!(simulate_walk(9, 10, 1, StopRule::FixedSteps).is_err());
    }
}
