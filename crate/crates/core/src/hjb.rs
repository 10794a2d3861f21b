//! Risk-free HJB `-∂_t φ - inf_a b ∂_y φ - ½σ² ∂_yy φ = 0` on a (t, y) grid,
//! solved by explicit backward time stepping with an upwinded drift.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{upwind, ControlGrid, CONTROL_POINTS};
use crate::error::{invalid, Error, NodeReport, Result};
use crate::grid::UniformGrid;
use crate::problem::ControlProblem;
use crate::scalar::{lit, to_f64, Scalar};

/// How the explicit time step is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CflPolicy {
    /// Coefficients frozen at the current slice, recomputed every sub-step.
    Adaptive,
    /// Worst case over the whole box, fixed for the run.
    WorstCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchemeOptions {
    /// Courant number `C` in `Δt ≤ C / (sum of stencil coefficients)`.
    pub cfl: f64,
    pub control_points: usize,
    pub cfl_policy: CflPolicy,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self { cfl: 0.9, control_points: CONTROL_POINTS, cfl_policy: CflPolicy::Adaptive }
    }
}

/// Time-stepping diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub substeps: usize,
    pub min_dt: f64,
    pub max_dt: f64,
}

impl SolveStats {
    pub(crate) fn record(&mut self, dt: f64) {
        if self.substeps == 0 {
            self.min_dt = dt;
            self.max_dt = dt;
        } else {
            self.min_dt = self.min_dt.min(dt);
            self.max_dt = self.max_dt.max(dt);
        }
        self.substeps += 1;
    }
}

/// A function of `(t, y)` sampled on a rectangular grid; row `i` is time `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField2D<T> {
    pub t_grid: UniformGrid<T>,
    pub y_grid: UniformGrid<T>,
    pub values: Vec<T>,
    pub terminal_desc: String,
    pub stats: SolveStats,
}

impl<T: Scalar> ValueField2D<T> {
    #[inline]
    pub fn at(&self, it: usize, iy: usize) -> T {
        self.values[it * self.y_grid.len() + iy]
    }

    pub fn slice(&self, it: usize) -> &[T] {
        let n = self.y_grid.len();
        &self.values[it * n..(it + 1) * n]
    }

    /// Bilinear interpolation, clamped to the grid.
    pub fn interpolate(&self, t: T, y: T) -> T {
        let (i, wt) = self.t_grid.locate(t);
        let (j, wy) = self.y_grid.locate(y);
        let lerp = |a: T, b: T, w: T| a + (b - a) * w;
        let lo = lerp(self.at(i, j), self.at(i, j + 1), wy);
        let hi = lerp(self.at(i + 1, j), self.at(i + 1, j + 1), wy);
        lerp(lo, hi, wt)
    }

    /// Largest absolute difference on the nodes this field shares with a
    /// coarser field whose nodes are every `k`-th node of this one.
    pub fn max_diff_on_coarse(&self, coarse: &Self) -> Result<T> {
        let kt = stride(&self.t_grid, &coarse.t_grid)?;
        let ky = stride(&self.y_grid, &coarse.y_grid)?;
        let mut worst = T::zero();
        for i in 0..coarse.t_grid.len() {
            for j in 0..coarse.y_grid.len() {
                worst = worst.max((self.at(i * kt, j * ky) - coarse.at(i, j)).abs());
            }
        }
        Ok(worst)
    }
}

/// Node stride between a fine grid and a coarse grid on the same interval.
pub(crate) fn stride<T: Scalar>(fine: &UniformGrid<T>, coarse: &UniformGrid<T>) -> Result<usize> {
    let (nf, nc) = (fine.len() - 1, coarse.len() - 1);
    if fine.lo() != coarse.lo() || fine.hi() != coarse.hi() || nf % nc != 0 {
        return Err(Error::GridMismatch(format!("{nc} cells do not nest into {nf}")));
    }
    Ok(nf / nc)
}

/// Nodes per parallel work item in the one-dimensional sweep.
const ROW_CHUNK: usize = 512;

/// Number of sub-steps for a macro step of length `dt` with stencil
/// coefficient sum `coef`.
pub(crate) fn substeps_for<T: Scalar>(dt: T, coef: T, cfl: T) -> usize {
    if coef <= T::zero() {
        return 1;
    }
    (dt * coef / cfl).ceil().to_usize().unwrap_or(1).max(1)
}

/// Time and state grids for a problem.
pub(crate) fn grids<T: Scalar>(problem: &ControlProblem<T>, n_t: usize, n_y: usize) -> Result<(UniformGrid<T>, UniformGrid<T>)> {
    if n_t < 2 || n_y < 3 {
        return Err(invalid("grid", format!("need n_t >= 2 and n_y >= 3, got ({n_t}, {n_y})")));
    }
    let (_, (ylo, yhi), _) = problem.scalar_parts()?;
    Ok((UniformGrid::new(T::zero(), problem.horizon, n_t)?, UniformGrid::new(ylo, yhi, n_y)?))
}

/// Forward and backward differences at node `j`, one-sided at the edges.
#[inline]
pub(crate) fn y_diffs<T: Scalar>(v: impl Fn(usize) -> T, j: usize, n: usize, inv_dy: T) -> (T, T) {
    if j == 0 {
        let d = (v(1) - v(0)) * inv_dy;
        (d, d)
    } else if j + 1 == n {
        let d = (v(n - 1) - v(n - 2)) * inv_dy;
        (d, d)
    } else {
        ((v(j + 1) - v(j)) * inv_dy, (v(j) - v(j - 1)) * inv_dy)
    }
}

/// Second difference; at the edges the one-sided three-point stencil, i.e.
/// the first derivative extrapolated linearly.
#[inline]
pub(crate) fn y_second<T: Scalar>(v: impl Fn(usize) -> T, j: usize, n: usize, inv_dy2: T) -> T {
    let c = j.clamp(1, n - 2);
    (v(c + 1) - lit::<T>(2.0) * v(c) + v(c - 1)) * inv_dy2
}

/// Solves the risk-free HJB backward from `terminal` on an `n_t × n_y` grid
/// over `[0, T] × y_box`. Explicit steps are sub-divided to satisfy
/// `Δt (σ²/Δy² + max|b|/Δy) ≤ C`.
pub fn solve_hjb<T: Scalar>(
    problem: &ControlProblem<T>,
    terminal: impl Fn(T) -> T + Sync,
    terminal_desc: impl Into<String>,
    (n_t, n_y): (usize, usize),
    options: &SchemeOptions,
) -> Result<ValueField2D<T>> {
    let (sigma, _, _) = problem.scalar_parts()?;
    let (t_grid, y_grid) = grids(problem, n_t, n_y)?;
    let controls = ControlGrid::new(problem, options.control_points)?;
    let dy = y_grid.step();
    let (inv_dy, inv_dy2) = (T::one() / dy, T::one() / (dy * dy));
    let half_s2 = sigma * sigma * lit(0.5);
    let cfl: T = lit(options.cfl);

    let ys = y_grid.nodes();
    let ts = t_grid.nodes();
    let mut b_max = T::zero();
    for &t in &ts {
        for &y in &ys {
            b_max = b_max.max(controls.max_abs_drift(t, y));
        }
    }
    let coef = sigma * sigma * inv_dy2 + b_max * inv_dy;

    let mut values = vec![T::zero(); n_t * n_y];
    let last = (n_t - 1) * n_y;
    for (v, &y) in values[last..].iter_mut().zip(&ys) {
        *v = terminal(y);
    }
    check_finite(&values[last..], ts[n_t - 1], &ys)?;

    let mut stats = SolveStats::default();
    let mut cur = values[last..].to_vec();
    let mut next = vec![T::zero(); n_y];
    // every drift preset is time-homogeneous, so the candidates are fixed
    let cand: Vec<[T; 4]> = ys.iter().map(|&y| controls.drift_candidates(T::zero(), y)).collect();
    for it in (0..n_t - 1).rev() {
        let macro_dt = ts[it + 1] - ts[it];
        let k = substeps_for(macro_dt, coef, cfl);
        let dt = macro_dt / lit(k as f64);
        for _ in 0..k {
            let (v, cand) = (&cur, &cand);
            next.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(c, out)| {
                for (i, o) in out.iter_mut().enumerate() {
                    let j = c * ROW_CHUNK + i;
                    let at = |i: usize| v[i];
                    let (fwd, bwd) = y_diffs(at, j, n_y, inv_dy);
                    let vyy = y_second(at, j, n_y, inv_dy2);
                    let b = cand[j].iter().fold(T::infinity(), |m, &b| m.min(upwind(b, fwd, bwd)));
                    *o = v[j] + dt * (b + half_s2 * vyy);
                }
            });
            std::mem::swap(&mut cur, &mut next);
            stats.record(to_f64(dt));
        }
        check_finite(&cur, ts[it], &ys)?;
        values[it * n_y..(it + 1) * n_y].copy_from_slice(&cur);
    }

    Ok(ValueField2D { t_grid, y_grid, values, terminal_desc: terminal_desc.into(), stats })
}

fn check_finite<T: Scalar>(slice: &[T], t: T, ys: &[T]) -> Result<()> {
    match slice.iter().position(|v| !v.is_finite()) {
        Some(j) => Err(Error::NonFinite(NodeReport { t: to_f64(t), y: to_f64(ys[j]), z: None, value: to_f64(slice[j]) })),
        None => Ok(()),
    }
}

/// Feedback controls on a (t, y) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrid2D<T> {
    pub t_grid: UniformGrid<T>,
    pub y_grid: UniformGrid<T>,
    pub alpha: Vec<T>,
}

impl<T: Scalar> PolicyGrid2D<T> {
    pub fn at(&self, it: usize, iy: usize) -> T {
        self.alpha[it * self.y_grid.len() + iy]
    }
}

/// Reads off the minimizing control of the upwinded Hamiltonian at every node.
pub fn extract_policy_2d<T: Scalar>(
    field: &ValueField2D<T>,
    problem: &ControlProblem<T>,
    options: &SchemeOptions,
) -> Result<PolicyGrid2D<T>> {
    let controls = ControlGrid::new(problem, options.control_points)?;
    let n_y = field.y_grid.len();
    let inv_dy = T::one() / field.y_grid.step();
    let mut alpha = Vec::with_capacity(field.values.len());
    for it in 0..field.t_grid.len() {
        let t = field.t_grid.node(it);
        let row = field.slice(it);
        for j in 0..n_y {
            let (fwd, bwd) = y_diffs(|i| row[i], j, n_y, inv_dy);
            alpha.push(controls.argmin(t, field.y_grid.node(j), fwd, bwd));
        }
    }
    Ok(PolicyGrid2D { t_grid: field.t_grid, y_grid: field.y_grid, alpha })
}
