use serde::Serialize;

use crate::error::{invalid, Result};
use crate::scalar::{lit, Scalar};

/// Uniform grid of `n` nodes on `[lo, hi]`, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformGrid<T> {
    lo: T,
    hi: T,
    n: usize,
}

impl<T: Scalar> UniformGrid<T> {
    pub fn new(lo: T, hi: T, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("grid", format!("need at least 2 nodes, got {n}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid("grid", format!("bad interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> T {
        (self.hi - self.lo) / lit((self.n - 1) as f64)
    }

    /// Node `i`. Computed as `lo + (hi - lo) * i / (n - 1)` so that symmetric
    /// grids with an odd node count hit zero exactly.
    #[inline]
    pub fn node(&self, i: usize) -> T {
        if i + 1 == self.n {
            return self.hi;
        }
        let frac: T = lit::<T>(i as f64) / lit((self.n - 1) as f64);
        self.lo + (self.hi - self.lo) * frac
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Cell index and fractional offset of `x`, clamped to the grid.
    #[inline]
    pub fn locate(&self, x: T) -> (usize, T) {
        if !(x > self.lo) {
            return (0, T::zero());
        }
        if !(x < self.hi) {
            return (self.n - 2, T::one());
        }
        let s = (x - self.lo) / self.step();
        let i = s.floor().to_usize().unwrap_or(0).min(self.n - 2);
        (i, s - lit(i as f64))
    }

    /// Index of the node equal to `x` within `tol`, if any.
    pub fn index_of(&self, x: T, tol: T) -> Option<usize> {
        let s = ((x - self.lo) / self.step()).round();
        let i = s.to_usize()?;
        (i < self.n && (self.node(i) - x).abs() <= tol).then_some(i)
    }

    /// Same node count and end points.
    pub fn same_as(&self, other: &Self) -> bool {
        self.n == other.n && self.lo == other.lo && self.hi == other.hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_odd_grid_hits_zero() {
        let g = UniformGrid::new(-10.0_f64, 10.0, 100_001).unwrap();
        assert_eq!(g.node(50_000), 0.0);
        assert_eq!(g.node(100_000), 10.0);
        assert_eq!(g.node(0), -10.0);
    }

    #[test]
    fn locate_clamps() {
        let g = UniformGrid::new(0.0_f64, 1.0, 11).unwrap();
        assert_eq!(g.locate(-1.0), (0, 0.0));
        assert_eq!(g.locate(2.0), (9, 1.0));
        let (i, w) = g.locate(0.35);
        assert_eq!(i, 3);
        assert!((w - 0.5).abs() < 1e-12);
        assert_eq!(g.index_of(0.3, 1e-12), Some(3));
        assert_eq!(g.index_of(0.35, 1e-12), None);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(UniformGrid::new(0.0_f64, 1.0, 1).is_err());
        assert!(UniformGrid::new(1.0_f64, 1.0, 3).is_err());
        assert!(UniformGrid::new(0.0_f64, f64::INFINITY, 3).is_err());
    }
}
