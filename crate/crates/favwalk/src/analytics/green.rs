//! Exact potential theory on 2D lattice disks and annuli: Green's
//! functions, hitting probabilities, and mean exit times via conjugate
//! gradient solves of the 5-point system, cross-checked against the
//! logarithmic asymptotic formulas.

use crate::stats::linear_fit;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Solver tolerance on the residual of (I - P) x = b.
pub const SOLVE_TOL: f64 = 1e-10;
/// Cap on the disk radius for full Green-column solves.
pub const GREEN_RADIUS_CAP: f64 = 300.0;
/// Cap on the outer radius for exact hitting solves.
pub const HITTING_RADIUS_CAP: f64 = 450.0;

/// A masked subset of the grid with precomputed neighbor indices, carrying
/// the operator x -> (I - P) x with Dirichlet rows outside the mask.
pub struct LatticeSystem {
    pub sites: Vec<(i32, i32)>,
    nbr: Vec<[i32; 4]>,
}

impl LatticeSystem {
    pub fn from_predicate(bound: i64, inside: impl Fn(i64, i64) -> bool) -> Self {
        let side = (2 * bound + 1) as usize;
        let mut index = vec![-1i32; side * side];
        let mut sites = Vec::new();
        let at = |x: i64, y: i64| ((x + bound) as usize) * side + (y + bound) as usize;
        for x in -bound..=bound {
            for y in -bound..=bound {
                if inside(x, y) {
                    index[at(x, y)] = sites.len() as i32;
                    sites.push((x as i32, y as i32));
                }
            }
        }
        let mut nbr = Vec::with_capacity(sites.len());
        for &(x, y) in &sites {
            let (x, y) = (x as i64, y as i64);
            let look = |a: i64, b: i64| -> i32 {
                if a.abs() > bound || b.abs() > bound {
                    -1
                } else {
                    index[at(a, b)]
                }
            };
            nbr.push([
                look(x + 1, y),
                look(x - 1, y),
                look(x, y + 1),
                look(x, y - 1),
            ]);
        }
        LatticeSystem { sites, nbr }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn index_of(&self, p: (i64, i64)) -> Option<usize> {
        self.sites
            .iter()
            .position(|&(x, y)| x as i64 == p.0 && y as i64 == p.1)
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            let mut acc = 0.0;
            for &j in &self.nbr[i] {
                if j >= 0 {
                    acc += x[j as usize];
                }
            }
            out[i] = x[i] - 0.25 * acc;
        }
    }

    /// Count of the site's neighbors that fall outside the mask and
    /// satisfy `pred`; used to fold inhomogeneous boundary values into b.
    pub fn outside_neighbor_count(
        &self,
        i: usize,
        pred: impl Fn(i64, i64) -> bool,
    ) -> u32 {
        let (x, y) = self.sites[i];
        let (x, y) = (x as i64, y as i64);
        let mut c = 0;
        for (k, (dx, dy)) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)].iter().enumerate() {
            if self.nbr[i][k] < 0 && pred(x + dx, y + dy) {
                c += 1;
            }
        }
        c
    }

    /// Conjugate gradient for (I - P) x = b; the operator is symmetric
    /// positive definite on any finite mask.
    pub fn solve(&self, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let n = self.len();
        if b.len() != n {
            return Err(Error::invalid("b", "length mismatch"));
        }
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rs: f64 = r.iter().map(|v| v * v).sum();
        let target = tol * tol;
        if rs <= target {
            return Ok(x);
        }
        for _ in 0..max_iter {
            self.apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            let alpha = rs / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rs_new: f64 = r.iter().map(|v| v * v).sum();
            if rs_new <= target {
                return Ok(x);
            }
            let beta = rs_new / rs;
            rs = rs_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
        Err(Error::NoConvergence(format!(
            "conjugate gradient stalled at residual {:.3e}",
            rs.sqrt()
        )))
    }
}

fn disk_system(radius: f64) -> Result<LatticeSystem> {
    if !(radius >= 1.0) || !radius.is_finite() {
        return Err(Error::invalid("radius", "must be at least 1"));
    }
    let r2 = (radius * radius).floor() as i64;
    let bound = radius.floor() as i64;
    Ok(LatticeSystem::from_predicate(bound, |x, y| {
        x * x + y * y <= r2
    }))
}

/// Expected number of visits to y before leaving the closed disk, as a
/// function of the start: one linear solve for the whole column.
pub struct GreenColumn {
    system: LatticeSystem,
    values: Vec<f64>,
}

impl GreenColumn {
    pub fn value_at(&self, x: (i64, i64)) -> f64 {
        self.system
            .index_of(x)
            .map(|i| self.values[i])
            .unwrap_or(0.0)
    }
}

pub fn green_column(radius: f64, y: (i64, i64)) -> Result<GreenColumn> {
    if radius > GREEN_RADIUS_CAP {
        return Err(Error::invalid(
            "radius",
            format!("{radius} exceeds the solve cap {GREEN_RADIUS_CAP}"),
        ));
    }
    let system = disk_system(radius)?;
    let Some(yi) = system.index_of(y) else {
        return Err(Error::invalid("y", "outside the disk"));
    };
    let mut b = vec![0.0; system.len()];
    b[yi] = 1.0;
    let values = system.solve(&b, SOLVE_TOL, 200_000)?;
    Ok(GreenColumn { system, values })
}

/// Green's function of the closed disk of the given radius; zero when
/// either argument leaves the disk.
pub fn green_exact(radius: f64, x: (i64, i64), y: (i64, i64)) -> Result<f64> {
    let r2 = (radius * radius).floor() as i64;
    if (y.0 * y.0 + y.1 * y.1) > r2 || (x.0 * x.0 + x.1 * x.1) > r2 {
        return Ok(0.0);
    }
    Ok(green_column(radius, y)?.value_at(x))
}

/// Expected time to leave the closed disk, from the origin, by solving the
/// discrete Poisson equation (I - P) u = 1.
pub fn mean_exit_time(radius: f64) -> Result<f64> {
    let system = disk_system(radius)?;
    let b = vec![1.0; system.len()];
    let u = system.solve(&b, SOLVE_TOL * (system.len() as f64).sqrt(), 200_000)?;
    let i = system
        .index_of((0, 0))
        .ok_or_else(|| Error::invalid("radius", "disk does not contain the origin"))?;
    Ok(u[i])
}

/// Offset of the disk Green's function at the origin from (2/pi) log R,
/// estimated at each radius and extrapolated linearly in 1/R.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct C0Fit {
    pub per_radius: Vec<(f64, f64)>,
    pub c0: f64,
    pub se: f64,
}

pub fn fit_c0(radii: &[f64]) -> Result<C0Fit> {
    if radii.len() < 2 {
        return Err(Error::invalid("radii", "need at least 2 radii"));
    }
    let mut per_radius = Vec::new();
    for &r in radii {
        let g = green_exact(r, (0, 0), (0, 0))?;
        per_radius.push((r, g - (2.0 / PI) * r.ln()));
    }
    if radii.len() == 2 {
        let (r0, c0_a) = per_radius[0];
        let (r1, c0_b) = per_radius[1];
        // two-point extrapolation in 1/R
        let slope = (c0_b - c0_a) / (1.0 / r1 - 1.0 / r0);
        let c0 = c0_a - slope / r0;
        return Ok(C0Fit {
            per_radius,
            c0,
            se: (c0_a - c0_b).abs(),
        });
    }
    let xs: Vec<f64> = per_radius.iter().map(|&(r, _)| 1.0 / r).collect();
    let ys: Vec<f64> = per_radius.iter().map(|&(_, c)| c).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(C0Fit {
        per_radius,
        c0: fit.intercept,
        se: fit.slope_se * xs.iter().sum::<f64>() / xs.len() as f64,
    })
}

/// The four displayed first-passage estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum HittingQuery {
    /// From the origin: leave the disk of radius r before returning.
    EscapeBeforeReturn { r: f64 },
    /// From x0: hit the origin before leaving the disk of radius r.
    ReturnBeforeEscape { r: f64, x0: (i64, i64) },
    /// From x in the annulus: reach the outer shell before the inner.
    OuterBeforeInner { r: f64, big_r: f64, x: (i64, i64) },
    /// From x in the annulus: reach the inner shell before the outer.
    InnerBeforeOuter { r: f64, big_r: f64, x: (i64, i64) },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HittingComparison {
    pub formula: f64,
    pub exact: Option<f64>,
    pub rel_gap: Option<f64>,
}

fn norm(p: (i64, i64)) -> f64 {
    ((p.0 * p.0 + p.1 * p.1) as f64).sqrt()
}

/// Sites of the closed disk shell: inside, with a neighbor outside.
fn in_shell(x: i64, y: i64, rho2: i64) -> bool {
    x * x + y * y <= rho2
        && [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .any(|&(dx, dy)| {
                let (a, b) = (x + dx, y + dy);
                a * a + b * b > rho2
            })
}

fn annulus_probability(r: f64, big_r: f64, x: (i64, i64), outer_target: bool) -> Result<f64> {
    let r2 = (r * r).floor() as i64;
    let big_r2 = (big_r * big_r).floor() as i64;
    let bound = big_r.floor() as i64;
    // Unknowns: strictly between the closed inner disk and the outer shell.
    let system = LatticeSystem::from_predicate(bound, |a, b| {
        let n2 = a * a + b * b;
        n2 > r2 && n2 <= big_r2 && !in_shell(a, b, big_r2)
    });
    let Some(xi) = system.index_of(x) else {
        return Err(Error::invalid("x", "not strictly inside the annulus"));
    };
    let mut b = vec![0.0; system.len()];
    for i in 0..system.len() {
        let hits = if outer_target {
            system.outside_neighbor_count(i, |a, c| in_shell(a, c, big_r2))
        } else {
            system.outside_neighbor_count(i, |a, c| a * a + c * c <= r2)
        };
        b[i] = 0.25 * hits as f64;
    }
    let u = system.solve(&b, SOLVE_TOL, 200_000)?;
    Ok(u[xi])
}

/// Asymptotic-formula value and, within the solver cap, the exact value
/// with the relative gap. `c0` comes from `fit_c0`.
pub fn hitting_probability(query: &HittingQuery, c0: f64) -> Result<HittingComparison> {
    let (formula, exact) = match *query {
        HittingQuery::EscapeBeforeReturn { r } => {
            if !(r > 1.0) {
                return Err(Error::invalid("r", "must exceed 1"));
            }
            let formula = 1.0 / ((2.0 / PI) * r.ln() + c0);
            let exact = if r <= GREEN_RADIUS_CAP {
                Some(1.0 / green_exact(r, (0, 0), (0, 0))?)
            } else {
                None
            };
            (formula, exact)
        }
        HittingQuery::ReturnBeforeEscape { r, x0 } => {
            let nx = norm(x0);
            if !(r > 1.0) || nx == 0.0 || nx > r {
                return Err(Error::invalid("x0", "need 0 < |x0| <= r"));
            }
            let formula = (2.0 / PI) * (r / nx).ln() / ((2.0 / PI) * r.ln() + c0);
            let exact = if r <= GREEN_RADIUS_CAP {
                let col = green_column(r, (0, 0))?;
                Some(col.value_at(x0) / col.value_at((0, 0)))
            } else {
                None
            };
            (formula, exact)
        }
        HittingQuery::OuterBeforeInner { r, big_r, x } => {
            let nx = norm(x);
            if !(r > 0.0) || r >= big_r || nx <= r || nx >= big_r {
                return Err(Error::invalid("x", "need r < |x| < R"));
            }
            let formula = (nx / r).ln() / (big_r / r).ln();
            let exact = if big_r <= HITTING_RADIUS_CAP {
                Some(annulus_probability(r, big_r, x, true)?)
            } else {
                None
            };
            (formula, exact)
        }
        HittingQuery::InnerBeforeOuter { r, big_r, x } => {
            let nx = norm(x);
            if !(r > 0.0) || r >= big_r || nx <= r || nx >= big_r {
                return Err(Error::invalid("x", "need r < |x| < R"));
            }
            let formula = (big_r / nx).ln() / (big_r / r).ln();
            let exact = if big_r <= HITTING_RADIUS_CAP {
                Some(annulus_probability(r, big_r, x, false)?)
            } else {
                None
            };
            (formula, exact)
        }
    };
    let rel_gap = exact.map(|e| (formula - e).abs() / e.abs().max(1e-300));
    Ok(HittingComparison {
        formula,
        exact,
        rel_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn green_zero_outside_support() {
        assert_eq!(green_exact(10.0, (0, 0), (11, 0)).unwrap(), 0.0);
        assert_eq!(green_exact(10.0, (12, 0), (0, 0)).unwrap(), 0.0);
    }

    #[test]
    fn green_symmetric() {
        let a = green_exact(30.0, (3, 4), (-2, 5)).unwrap();
        let b = green_exact(30.0, (-2, 5), (3, 4)).unwrap();
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        assert!(a > 0.0);
    }

    #[test]
    fn green_origin_matches_log_growth() {
        // The offset from (2/pi) log R stabilizes as R grows.
        let fit = fit_c0(&[50.0, 100.0, 200.0]).unwrap();
        let c_100 = fit.per_radius[1].1;
        let c_200 = fit.per_radius[2].1;
        assert!((c_100 - c_200).abs() < 0.01, "offsets {c_100} vs {c_200}");
        assert!(fit.c0 > 0.5 && fit.c0 < 1.5, "fitted offset {}", fit.c0);
    }

    #[test]
    fn escape_formula_close_at_r_100() {
        let fit = fit_c0(&[50.0, 200.0]).unwrap();
        let cmp = hitting_probability(&HittingQuery::EscapeBeforeReturn { r: 100.0 }, fit.c0)
            .unwrap();
        assert!(cmp.rel_gap.unwrap() < 0.01, "gap {:?}", cmp.rel_gap);
    }

    #[test]
    fn return_formula_close_at_r_100() {
        let fit = fit_c0(&[50.0, 200.0]).unwrap();
        let cmp = hitting_probability(
            &HittingQuery::ReturnBeforeEscape {
                r: 100.0,
                x0: (5, 0),
            },
            fit.c0,
        )
        .unwrap();
        assert!(cmp.rel_gap.unwrap() < 0.02, "gap {:?}", cmp.rel_gap);
    }

    #[test]
    fn annulus_boundary_case_near_one() {
        // |x| barely above r: reaching the inner shell first is near certain.
        let cmp = hitting_probability(
            &HittingQuery::InnerBeforeOuter {
                r: 20.0,
                big_r: 80.0,
                x: (21, 0),
            },
            0.0,
        )
        .unwrap();
        assert!(cmp.formula > 0.95);
        assert!(cmp.exact.unwrap() > 0.93);
    }

    #[test]
    fn annulus_variants_sum_to_one() {
        let a = hitting_probability(
            &HittingQuery::OuterBeforeInner {
                r: 10.0,
                big_r: 40.0,
                x: (20, 0),
            },
            0.0,
        )
        .unwrap();
        let b = hitting_probability(
            &HittingQuery::InnerBeforeOuter {
                r: 10.0,
                big_r: 40.0,
                x: (20, 0),
            },
            0.0,
        )
        .unwrap();
        let total = a.exact.unwrap() + b.exact.unwrap();
        assert!((total - 1.0).abs() < 1e-8, "total {total}");
    }

    #[test]
    fn formula_gap_shrinks_with_radius() {
        let fit = fit_c0(&[40.0, 80.0, 160.0]).unwrap();
        let mut gaps = Vec::new();
        for &r in &[25.0, 50.0, 100.0, 200.0] {
            let cmp =
                hitting_probability(&HittingQuery::EscapeBeforeReturn { r }, fit.c0).unwrap();
            gaps.push((r.ln(), cmp.rel_gap.unwrap().max(1e-12).ln()));
        }
        let xs: Vec<f64> = gaps.iter().map(|&(x, _)| x).collect();
        let ys: Vec<f64> = gaps.iter().map(|&(_, y)| y).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!(
            fit.slope < -0.4,
            "expected decaying relative gap, slope {}",
            fit.slope
        );
    }

    #[test]
    fn mean_exit_time_scales_like_r_squared() {
        let t = mean_exit_time(20.0).unwrap();
        assert!((t / 400.0 - 1.0).abs() < 0.15, "mean exit {t}");
    }

    #[test]
    fn geometry_errors() {
        assert!(hitting_probability(
            &HittingQuery::OuterBeforeInner {
                r: 50.0,
                big_r: 40.0,
                x: (45, 0)
            },
            1.0
        )
        .is_err());
        assert!(hitting_probability(
            &HittingQuery::ReturnBeforeEscape {
                r: 30.0,
                x0: (0, 0)
            },
            1.0
        )
        .is_err());
    }
}
