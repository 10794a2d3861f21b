use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::UniformGrid;
use crate::hjb::{solve_hjb, SchemeOptions};
use crate::loss::LossSpec;
use crate::optim::golden_min;
use crate::problem::ControlProblem;
use crate::scalar::{to_f64, Scalar};

/// Result of the primal sweep `V(0, y0, z) = inf_r [w_r(0, y0) + r z]`, where
/// `w_r = inf_α E[l(f(Y_T) - r)]` is a risk-free problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RSweep {
    pub y0: f64,
    pub z: f64,
    pub value: f64,
    pub r_star: f64,
    /// `(r, w_r + r z)` on the first-stage grid.
    pub coarse: Vec<(f64, f64)>,
    /// Objective evaluations, cached ones included.
    pub solves: usize,
}

/// `w_r(0, y0)` with every solve memoized by the bits of `r`, so sweeps at
/// several `z` share their risk-free solves.
struct RiskFree<'a, T: Scalar> {
    problem: &'a ControlProblem<T>,
    spec: &'a LossSpec<T>,
    y0: T,
    pde_grid: (usize, usize),
    options: &'a SchemeOptions,
    cache: Mutex<HashMap<u64, T>>,
}

impl<T: Scalar> RiskFree<'_, T> {
    fn solve(&self, r: T) -> Result<T> {
        let key = to_f64(r).to_bits();
        if let Some(&w) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(w);
        }
        let f = self.problem.terminal;
        let spec = self.spec;
        let w = solve_hjb(self.problem, |y| spec.loss(f.eval(y) - r), "l(f - r)", self.pde_grid, self.options)?
            .interpolate(T::zero(), self.y0);
        self.cache.lock().expect("cache lock").insert(key, w);
        Ok(w)
    }

    /// Solves every node of `rs` not yet cached, in parallel.
    fn fill(&self, rs: &[T]) -> Result<Vec<T>> {
        rs.par_iter().map(|&r| self.solve(r)).collect()
    }
}

fn argmin<T: Scalar>(xs: &[T]) -> usize {
    xs.iter().enumerate().fold(0, |best, (i, &x)| if x < xs[best] { i } else { best })
}

/// Nodes of the second-stage grid.
const FINE_NODES: usize = 21;

/// Two-stage sweep: the full `r_grid`, then [`FINE_NODES`] nodes across the
/// two cells around the first-stage minimizer, finished by a golden-section
/// search over the two second-stage cells around the best node.
///
/// Fails with [`Error::RGridTooSmall`] when the minimizer sits on an end of
/// `r_grid` and the objective is still decreasing there; a flat end is
/// accepted.
pub fn r_sweep_oracle<T: Scalar>(
    problem: &ControlProblem<T>,
    spec: &LossSpec<T>,
    y0: T,
    z: T,
    r_grid: &UniformGrid<T>,
    pde_grid: (usize, usize),
    options: &SchemeOptions,
) -> Result<RSweep> {
    let mut out = r_sweep_many(problem, spec, y0, &[z], r_grid, pde_grid, options)?;
    Ok(out.remove(0))
}

/// [`r_sweep_oracle`] at several `z`, reusing risk-free solves between them.
pub fn r_sweep_many<T: Scalar>(
    problem: &ControlProblem<T>,
    spec: &LossSpec<T>,
    y0: T,
    zs: &[T],
    r_grid: &UniformGrid<T>,
    pde_grid: (usize, usize),
    options: &SchemeOptions,
) -> Result<Vec<RSweep>> {
    for &z in zs {
        if !spec.conj(z).is_finite() {
            return Err(invalid("z", format!("{z} is outside the conjugate domain of `{}`", spec.name())));
        }
    }
    let n = r_grid.len();
    if n < 3 {
        return Err(invalid("r_grid", "need at least 3 nodes"));
    }
    let rf = RiskFree { problem, spec, y0, pde_grid, options, cache: Mutex::new(HashMap::new()) };
    let rs = r_grid.nodes();
    let w = rf.fill(&rs)?;
    zs.iter().map(|&z| sweep_at(&rf, z, &rs, &w)).collect()
}

fn sweep_at<T: Scalar>(rf: &RiskFree<'_, T>, z: T, rs: &[T], w: &[T]) -> Result<RSweep> {
    let n = rs.len();
    let obj: Vec<T> = rs.iter().zip(w).map(|(&r, &w)| w + r * z).collect();
    let i = argmin(&obj);
    let slack = |v: T| T::from_f64(1e-12).unwrap_or_else(T::epsilon) * (T::one() + v.abs());
    if (i == 0 && obj[0] < obj[1] - slack(obj[0])) || (i == n - 1 && obj[n - 1] < obj[n - 2] - slack(obj[n - 1])) {
        return Err(Error::RGridTooSmall { edge: to_f64(rs[i]) });
    }
    let fine = UniformGrid::new(rs[i.saturating_sub(1)], rs[(i + 1).min(n - 1)], FINE_NODES)?.nodes();
    let fine_obj: Vec<T> = rf.fill(&fine)?.into_iter().zip(&fine).map(|(w, &r)| w + r * z).collect();
    let j = argmin(&fine_obj);
    let (mut value, mut r_star) = if fine_obj[j] < obj[i] { (fine_obj[j], fine[j]) } else { (obj[i], rs[i]) };
    let (a, b) = (fine[j.saturating_sub(1)], fine[(j + 1).min(FINE_NODES - 1)]);
    let solves = std::cell::Cell::new(n + FINE_NODES);
    let single = |r: T| -> T {
        solves.set(solves.get() + 1);
        rf.solve(r).map_or(T::infinity(), |w| w + r * z)
    };
    let tol = (b - a) * T::from_f64(1e-3).unwrap_or_else(T::epsilon);
    let (r_polish, v_polish) = golden_min(single, a, b, tol);
    if !v_polish.is_finite() {
        return Err(Error::NoConvergence(format!("risk-free solve failed near r = {r_polish}")));
    }
    if v_polish < value {
        value = v_polish;
        r_star = r_polish;
    }
    Ok(RSweep {
        y0: to_f64(rf.y0),
        z: to_f64(z),
        value: to_f64(value),
        r_star: to_f64(r_star),
        coarse: rs.iter().zip(&obj).map(|(&r, &v)| (to_f64(r), to_f64(v))).collect(),
        solves: solves.get(),
    })
}
