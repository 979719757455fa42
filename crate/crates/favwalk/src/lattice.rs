//! Lattice points and step geometry for `Z^d`.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Largest supported dimension.
pub const MAX_DIMENSION: u32 = 8;

/// Coordinates are kept far from the i64 boundary so that any walk step
/// stays representable; enforced at simulation entry.
pub const COORD_LIMIT: i64 = i64::MAX / 4;

/// A site of `Z^d`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticePoint(pub Vec<i64>);

impl LatticePoint {
    pub fn new(coords: Vec<i64>) -> Result<Self> {
        let d = coords.len() as u32;
        if d == 0 || d > MAX_DIMENSION {
            return Err(Error::BadDimension(d));
        }
        if coords.iter().any(|&c| c.abs() >= COORD_LIMIT) {
            return Err(Error::CoordinateOverflow);
        }
        Ok(LatticePoint(coords))
    }

    pub fn origin(dimension: u32) -> Self {
        LatticePoint(vec![0; dimension as usize])
    }

    /// The unit vector along `axis` (0-based).
    pub fn unit(dimension: u32, axis: usize) -> Self {
        let mut v = vec![0; dimension as usize];
        v[axis] = 1;
        LatticePoint(v)
    }

    pub fn dimension(&self) -> u32 {
        self.0.len() as u32
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn norm2(&self) -> u128 {
        self.0.iter().map(|&c| (c as i128 * c as i128) as u128).sum()
    }

    pub fn l1_distance(&self, other: &LatticePoint) -> u64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| a.abs_diff(b))
            .sum()
    }

    pub fn is_neighbor_of(&self, other: &LatticePoint) -> bool {
        self.0.len() == other.0.len() && self.l1_distance(other) == 1
    }

    /// Parity of the coordinate sum: 0 on the even sublattice.
    pub fn site_parity(&self) -> u8 {
        (self.0.iter().map(|&c| c.unsigned_abs()).sum::<u64>() % 2) as u8
    }

    /// Parity of the first coordinate.
    pub fn first_coord_parity(&self) -> u8 {
        (self.0[0].unsigned_abs() % 2) as u8
    }

    pub fn shifted(&self, axis: usize, delta: i64) -> LatticePoint {
        let mut v = self.0.clone();
        v[axis] += delta;
        LatticePoint(v)
    }
}

impl std::fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Packs a 2D point into one u64 key for fast map access.
#[inline(always)]
pub fn pack2(x: i64, y: i64) -> u64 {
    ((x as u32 as u64) << 32) | (y as u32 as u64)
}

#[inline(always)]
pub fn unpack2(key: u64) -> (i64, i64) {
    (((key >> 32) as u32) as i32 as i64, (key as u32) as i32 as i64)
}

/// Packs a 3D point with 21 bits per signed coordinate.
#[inline(always)]
pub fn pack3(x: i64, y: i64, z: i64) -> u64 {
    const M: u64 = (1 << 21) - 1;
    (((x as u64) & M) << 42) | (((y as u64) & M) << 21) | ((z as u64) & M)
}

#[inline(always)]
pub fn unpack3(key: u64) -> (i64, i64, i64) {
    #[inline(always)]
    fn sext(v: u64) -> i64 {
        ((v << 43) as i64) >> 43
    }
    (sext(key >> 42), sext((key >> 21) & ((1 << 21) - 1)), sext(key & ((1 << 21) - 1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_dimension() {
        assert!(matches!(LatticePoint::new(vec![]), Err(Error::BadDimension(0))));
        assert!(LatticePoint::new(vec![0; 9]).is_err());
        assert!(LatticePoint::new(vec![1, 2, 3]).is_ok());
    }

    #[test]
    fn new_rejects_overflowing_coords() {
        assert!(matches!(
            LatticePoint::new(vec![i64::MAX / 2]),
            Err(Error::CoordinateOverflow)
        ));
    }

    #[test]
    fn neighbor_and_parity() {
        let o = LatticePoint::origin(2);
        let e1 = LatticePoint::unit(2, 0);
        assert!(o.is_neighbor_of(&e1));
        assert!(!o.is_neighbor_of(&o));
        assert_eq!(o.site_parity(), 0);
        assert_eq!(e1.site_parity(), 1);
        assert_eq!(LatticePoint(vec![-3, 2]).site_parity(), 1);
        assert_eq!(LatticePoint(vec![-3, 2]).first_coord_parity(), 1);
    }

    #[test]
    fn pack_round_trips() {
        for &(x, y) in &[(0i64, 0i64), (5, -7), (-100000, 99999), (1 << 20, -(1 << 20))] {
            assert_eq!(unpack2(pack2(x, y)), (x, y));
        }
        for &(x, y, z) in &[(0i64, 0i64, 0i64), (5, -7, 11), (-1000000, 999999, -3)] {
            assert_eq!(unpack3(pack3(x, y, z)), (x, y, z));
        }
    }
}
