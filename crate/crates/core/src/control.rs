//! Discretized control set and the upwinded drift Hamiltonian
//! `inf_a b(t, y, a) ∂_y V` shared by both PDE solvers.

use crate::error::Result;
use crate::problem::{ControlProblem, Drift};
use crate::scalar::{lit, Scalar};

/// Points per control axis in the control discretization.
pub const CONTROL_POINTS: usize = 33;

/// Uniform discretization of a one-dimensional control interval.
#[derive(Debug, Clone)]
pub struct ControlGrid<T> {
    points: Vec<T>,
    drift: Drift<T>,
}

/// Upwinded transport term for a drift value `b`.
#[inline]
pub(crate) fn upwind<T: Scalar>(b: T, d_fwd: T, d_bwd: T) -> T {
    if b > T::zero() {
        b * d_fwd
    } else {
        b * d_bwd
    }
}

impl<T: Scalar> ControlGrid<T> {
    pub fn new(problem: &ControlProblem<T>, n: usize) -> Result<Self> {
        let (_, _, (lo, hi)) = problem.scalar_parts()?;
        let points = if lo == hi || n < 2 {
            vec![lo]
        } else {
            (0..n)
                .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * (lit::<T>(i as f64) / lit((n - 1) as f64)) })
                .collect()
        };
        Ok(Self { points, drift: problem.drift.clone() })
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    /// `min_a` of the upwinded `b(t, y, a) ∂_y V` over the grid, using the
    /// forward and backward differences `d_fwd`, `d_bwd`.
    ///
    /// The drift is affine in `a`, so the upwinded term is piecewise linear in
    /// `a` with a single kink where `b` changes sign; the minimum over the
    /// grid is attained at an end point or at a node next to that kink.
    #[inline]
    pub fn drift_inf(&self, t: T, y: T, d_fwd: T, d_bwd: T) -> T {
        let (base, slope) = self.drift.affine_scalar(t, y);
        let n = self.points.len();
        let eval = |i: usize| upwind(base + slope * self.points[i], d_fwd, d_bwd);
        let mut best = eval(0);
        if n == 1 {
            return best;
        }
        best = best.min(eval(n - 1));
        if slope != T::zero() {
            let lo = self.points[0];
            let step = (self.points[n - 1] - lo) / lit((n - 1) as f64);
            let a0 = -base / slope;
            let s = ((a0 - lo) / step).floor();
            if s >= T::zero() && s < lit((n - 1) as f64) {
                let i = s.to_usize().unwrap_or(0);
                best = best.min(eval(i)).min(eval(i + 1));
            }
        }
        best
    }

    /// Up to four drift values at `(t, y)` (repeated to fill the array) whose
    /// upwinded minimum equals [`Self::drift_inf`] for any differences.
    pub fn drift_candidates(&self, t: T, y: T) -> [T; 4] {
        let (base, slope) = self.drift.affine_scalar(t, y);
        let n = self.points.len();
        let b = |i: usize| base + slope * self.points[i];
        let mut out = [b(0), b(n - 1), b(0), b(n - 1)];
        if n > 1 && slope != T::zero() {
            let lo = self.points[0];
            let step = (self.points[n - 1] - lo) / lit((n - 1) as f64);
            let s = ((-base / slope - lo) / step).floor();
            if s >= T::zero() && s < lit((n - 1) as f64) {
                let i = s.to_usize().unwrap_or(0);
                out[2] = b(i);
                out[3] = b(i + 1);
            }
        }
        out
    }

    /// Minimizing control over the full grid; ties go to the smallest control.
    pub fn argmin(&self, t: T, y: T, d_fwd: T, d_bwd: T) -> T {
        let (base, slope) = self.drift.affine_scalar(t, y);
        let mut best = T::infinity();
        let mut arg = self.points[0];
        for &a in &self.points {
            let v = upwind(base + slope * a, d_fwd, d_bwd);
            if v < best {
                best = v;
                arg = a;
            }
        }
        arg
    }

    /// Largest `|b|` over the grid at `(t, y)`.
    pub fn max_abs_drift(&self, t: T, y: T) -> T {
        let (base, slope) = self.drift.affine_scalar(t, y);
        self.points.iter().map(|&a| (base + slope * a).abs()).fold(T::zero(), T::max)
    }

    /// Exact `inf_a b(t, y, a) p` over the grid for a central gradient `p`.
    pub fn drift_inf_central(&self, t: T, y: T, p: T) -> T {
        self.drift_inf(t, y, p, p)
    }
}
