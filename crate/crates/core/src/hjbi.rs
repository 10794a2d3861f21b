//! The enlarged-state HJBI equation for `V(t, y, z)`:
//!
//! ```text
//! -∂_t V - inf_a b ∂_y V - ½σ² ∂_yy V - sup_{|β|≤n} (½ z² β² ∂_zz V + z σ β ∂_yz V) = 0
//! V(T, y, z) = z f(y) - l*(z)
//! V(t, y, z) = z φ(t, y) - l*(z)   on the z-edges
//! ```
//!
//! solved by explicit backward time stepping. The adversary's volatility is
//! truncated at `n` (`beta_bound`); the cross derivative uses the standard
//! four-corner central stencil, which is not monotone, so the solved field
//! is checked afterwards for z-concavity and the `z φ - l*` lower bound
//! rather than assumed to satisfy them.

use std::sync::Arc;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::control::{upwind, ControlGrid};
use crate::error::{invalid, Error, NodeReport, Result};
use crate::grid::UniformGrid;
use crate::hjb::{stride, y_diffs, CflPolicy, SchemeOptions, ValueField2D};
use crate::loss::LossSpec;
use crate::policy::PolicyField;
use crate::problem::ControlProblem;
use crate::scalar::{lit, to_f64, Scalar};

/// Derivatives of `V` at one node, as they enter the HJBI equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianInput<T> {
    pub t: T,
    pub y: T,
    pub z: T,
    pub p_t: T,
    pub p_y: T,
    pub v_yy: T,
    pub v_zz: T,
    pub v_yz: T,
}

/// `sup_{|β| ≤ n} (½ z² β² v_zz + z σ β v_yz)` in closed form, with its
/// maximizer. Concave case: the clamped vertex `-σ v_yz / (z v_zz)`.
/// Otherwise the bound on the side of `σ v_yz` (ties go to `+n`).
#[inline]
pub fn adversary_sup<T: Scalar>(v_zz: T, v_yz: T, z: T, sigma: T, beta_bound: T) -> (T, T) {
    let lin = z * sigma * v_yz;
    let quad = lit::<T>(0.5) * z * z * v_zz;
    let beta = if v_zz < T::zero() {
        (-lin / (lit::<T>(2.0) * quad)).max(-beta_bound).min(beta_bound)
    } else if lin >= T::zero() {
        beta_bound
    } else {
        -beta_bound
    };
    (quad * beta * beta + lin * beta, beta)
}

/// Residual of the HJBI equation at a node, with the exact control infimum
/// over the discretized control set.
pub fn hjbi_residual<T: Scalar>(controls: &ControlGrid<T>, sigma: T, beta_bound: T, input: &HamiltonianInput<T>) -> T {
    let (adv, _) = adversary_sup(input.v_zz, input.v_yz, input.z, sigma, beta_bound);
    -input.p_t - controls.drift_inf_central(input.t, input.y, input.p_y) - lit::<T>(0.5) * sigma * sigma * input.v_yy - adv
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct HjbiStats {
    pub substeps: usize,
    pub min_dt: f64,
    pub max_dt: f64,
    pub cfl_policy: Option<CflPolicy>,
    /// Largest undivided second difference in z over interior nodes.
    pub max_convexity: f64,
    /// Slices whose convexity exceeded `1e-4 ·` value scale.
    pub concavity_warnings: usize,
}

/// `V(t, y, z)` on a `(t, y, z)` grid, laid out `[t][y][z]`.
#[derive(Debug, Clone)]
pub struct ValueField3D<T> {
    pub t_grid: UniformGrid<T>,
    pub y_grid: UniformGrid<T>,
    pub z_grid: UniformGrid<T>,
    pub values: Vec<T>,
    pub beta_bound: T,
    pub phi: Arc<ValueField2D<T>>,
    /// `f(y_j)` at the y-nodes.
    pub terminal_f: Vec<T>,
    /// `l*(z_k)` at the z-nodes.
    pub conj: Vec<T>,
    pub stats: HjbiStats,
}

impl<T: Scalar> ValueField3D<T> {
    #[inline]
    pub fn idx(&self, it: usize, iy: usize, iz: usize) -> usize {
        (it * self.y_grid.len() + iy) * self.z_grid.len() + iz
    }

    #[inline]
    pub fn at(&self, it: usize, iy: usize, iz: usize) -> T {
        self.values[self.idx(it, iy, iz)]
    }

    pub fn slice(&self, it: usize) -> &[T] {
        let n = self.y_grid.len() * self.z_grid.len();
        &self.values[it * n..(it + 1) * n]
    }

    /// Trilinear interpolation, clamped to the grid.
    pub fn interpolate(&self, t: T, y: T, z: T) -> T {
        let (i, wt) = self.t_grid.locate(t);
        let (j, wy) = self.y_grid.locate(y);
        let (k, wz) = self.z_grid.locate(z);
        let mut acc = T::zero();
        for (di, ft) in [(0, T::one() - wt), (1, wt)] {
            for (dj, fy) in [(0, T::one() - wy), (1, wy)] {
                for (dk, fz) in [(0, T::one() - wz), (1, wz)] {
                    let w = ft * fy * fz;
                    if w != T::zero() {
                        acc = acc + w * self.at(i + di, j + dj, k + dk);
                    }
                }
            }
        }
        acc
    }

    /// Bilinear in `(t, y)` and quadratic in `z` through the three nodes
    /// nearest to `z`. Concave profiles are undershot by linear
    /// interpolation at first order in `Δz²`; the quadratic fit removes that bias.
    pub fn sample(&self, t: T, y: T, z: T) -> T {
        let (i, wt) = self.t_grid.locate(t);
        let (j, wy) = self.y_grid.locate(y);
        let n_z = self.z_grid.len();
        let (k, wz) = self.z_grid.locate(z);
        // centre of the three-node stencil
        let c = (if wz < lit(0.5) { k } else { k + 1 }).clamp(1, n_z - 2);
        let h = self.z_grid.step();
        let s = (z.max(self.z_grid.lo()).min(self.z_grid.hi()) - self.z_grid.node(c)) / h;
        let half: T = lit(0.5);
        let weights = [half * s * (s - T::one()), T::one() - s * s, half * s * (s + T::one())];
        let mut acc = T::zero();
        for (di, ft) in [(0, T::one() - wt), (1, wt)] {
            for (dj, fy) in [(0, T::one() - wy), (1, wy)] {
                let w = ft * fy;
                if w == T::zero() {
                    continue;
                }
                let q = (0..3).fold(T::zero(), |a, m| a + weights[m] * self.at(i + di, j + dj, c + m - 1));
                acc = acc + w * q;
            }
        }
        acc
    }

    /// `z φ(t, y) - l*(z)` at a node: the value when the adversary stays idle.
    #[inline]
    pub fn idle_value(&self, it: usize, iy: usize, iz: usize) -> T {
        self.z_grid.node(iz) * self.phi.at(it, iy) - self.conj[iz]
    }

    /// Largest difference on the nodes shared with a coarser nested solve.
    pub fn max_diff_on_coarse(&self, coarse: &Self) -> Result<T> {
        let kt = stride(&self.t_grid, &coarse.t_grid)?;
        let ky = stride(&self.y_grid, &coarse.y_grid)?;
        let kz = stride(&self.z_grid, &coarse.z_grid)?;
        let mut worst = T::zero();
        for i in 0..coarse.t_grid.len() {
            for j in 0..coarse.y_grid.len() {
                for k in 0..coarse.z_grid.len() {
                    worst = worst.max((self.at(i * kt, j * ky, k * kz) - coarse.at(i, j, k)).abs());
                }
            }
        }
        Ok(worst)
    }

    /// Largest absolute difference with a field on the same grids, restricted
    /// to the first `n_slices` time slices.
    pub fn max_diff_prefix(&self, other: &Self, n_slices: usize) -> Result<T> {
        if !(self.y_grid.same_as(&other.y_grid) && self.z_grid.same_as(&other.z_grid)) {
            return Err(Error::GridMismatch("fields live on different (y, z) grids".into()));
        }
        let n = n_slices * self.y_grid.len() * self.z_grid.len();
        if n > self.values.len() || n > other.values.len() {
            return Err(Error::GridMismatch("not enough time slices".into()));
        }
        Ok(self.values[..n]
            .iter()
            .zip(&other.values[..n])
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max))
    }
}

/// Everything the stencil needs that stays fixed during a solve.
struct Stencil<'a, T> {
    ys: Vec<T>,
    zs: Vec<T>,
    n_y: usize,
    n_z: usize,
    inv_dy: T,
    inv_dy2: T,
    inv_dz: T,
    inv_dz2: T,
    dy: T,
    sigma: T,
    half_s2: T,
    beta_bound: T,
    b_max: T,
    controls: &'a ControlGrid<T>,
}

impl<T: Scalar> Stencil<'_, T> {
    /// Fills `out[1..n_z-1]` with the Hamiltonian on row `j` and returns the
    /// largest stencil coefficient sum on the row.
    #[inline]
    fn row(&self, v: &[T], j: usize, cand: &[T; 4], out: &mut [T]) -> T {
        let (n, nz) = (self.n_y, self.n_z);
        let row = |i: usize| &v[i * nz..(i + 1) * nz];
        // one-sided differences at the y-edges
        let (fh, fl, bh, bl) = if j == 0 {
            (1, 0, 1, 0)
        } else if j + 1 == n {
            (n - 1, n - 2, n - 1, n - 2)
        } else {
            (j + 1, j, j, j - 1)
        };
        let c = j.clamp(1, n - 2);
        let (jm, jp) = (j.saturating_sub(1), (j + 1).min(n - 1));
        let (f_hi, f_lo, b_hi, b_lo) = (row(fh), row(fl), row(bh), row(bl));
        let (s_up, s_mid, s_dn) = (row(c + 1), row(c), row(c - 1));
        let (x_up, x_dn, mid) = (row(jp), row(jm), row(j));
        let two = lit::<T>(2.0);
        let cross_scale = lit::<T>(0.5) * self.inv_dz / (lit::<T>((jp - jm) as f64) * self.dy);
        let base_coef = self.sigma * self.sigma * self.inv_dy2 + self.b_max * self.inv_dy;
        let mixed = two * self.sigma * self.inv_dy * self.inv_dz;
        let mut worst = T::zero();
        for k in 1..nz - 1 {
            let fwd = (f_hi[k] - f_lo[k]) * self.inv_dy;
            let bwd = (b_hi[k] - b_lo[k]) * self.inv_dy;
            let v_yy = (s_up[k] - two * s_mid[k] + s_dn[k]) * self.inv_dy2;
            let v_zz = (mid[k + 1] - two * mid[k] + mid[k - 1]) * self.inv_dz2;
            let v_yz = (x_up[k + 1] - x_up[k - 1] - x_dn[k + 1] + x_dn[k - 1]) * cross_scale;
            let z = self.zs[k];
            let (adv, beta) = adversary_sup(v_zz, v_yz, z, self.sigma, self.beta_bound);
            let drift = cand.iter().fold(T::infinity(), |m, &b| m.min(upwind(b, fwd, bwd)));
            out[k] = drift + self.half_s2 * v_yy + adv;
            let zb = (z * beta).abs();
            worst = worst.max(base_coef + zb * zb * self.inv_dz2 + zb * mixed);
        }
        worst
    }

    fn worst_case_coef(&self) -> T {
        let zb = self.zs[self.n_z - 1].abs().max(self.zs[0].abs()) * self.beta_bound;
        self.sigma * self.sigma * self.inv_dy2
            + zb * zb * self.inv_dz2
            + lit::<T>(2.0) * zb * self.sigma * self.inv_dy * self.inv_dz
            + self.b_max * self.inv_dy
    }
}

struct Setup<'a, T> {
    stencil: Stencil<'a, T>,
    t_grid: UniformGrid<T>,
    y_grid: UniformGrid<T>,
    z_grid: UniformGrid<T>,
    conj: Vec<T>,
    terminal_f: Vec<T>,
}

fn setup<'a, T: Scalar>(
    problem: &ControlProblem<T>,
    spec: &LossSpec<T>,
    phi: &ValueField2D<T>,
    n_z: usize,
    beta_bound: T,
    controls: &'a ControlGrid<T>,
) -> Result<Setup<'a, T>> {
    let (sigma, (ylo, yhi), _) = problem.scalar_parts()?;
    problem.validate_z_box(spec)?;
    if !(beta_bound > T::zero() && beta_bound.is_finite()) {
        return Err(invalid("beta_bound", "must be positive and finite"));
    }
    if n_z < 3 || phi.y_grid.len() < 3 {
        return Err(invalid("grid", "need at least 3 nodes in y and z"));
    }
    let t_grid = phi.t_grid;
    let y_grid = phi.y_grid;
    if t_grid.lo() != T::zero() || t_grid.hi() != problem.horizon || y_grid.lo() != ylo || y_grid.hi() != yhi {
        return Err(Error::GridMismatch("phi is not sampled on the problem's (t, y) box".into()));
    }
    let (zlo, zhi) = problem.z_box;
    let z_grid = UniformGrid::new(zlo, zhi, n_z)?;
    let zs = z_grid.nodes();
    let conj = zs
        .iter()
        .map(|&z| spec.conj(z).finite().ok_or_else(|| invalid("z_box", format!("l*({z}) is infinite"))))
        .collect::<Result<Vec<T>>>()?;
    let ys = y_grid.nodes();
    let terminal_f: Vec<T> = ys.iter().map(|&y| problem.terminal.eval(y)).collect();
    let mut b_max = T::zero();
    for &t in &t_grid.nodes() {
        for &y in &ys {
            b_max = b_max.max(controls.max_abs_drift(t, y));
        }
    }
    let (dy, dz) = (y_grid.step(), z_grid.step());
    let stencil = Stencil {
        n_y: ys.len(),
        n_z,
        ys,
        zs,
        inv_dy: T::one() / dy,
        inv_dy2: T::one() / (dy * dy),
        inv_dz: T::one() / dz,
        inv_dz2: T::one() / (dz * dz),
        dy,
        sigma,
        half_s2: lit::<T>(0.5) * sigma * sigma,
        beta_bound,
        b_max,
        controls,
    };
    Ok(Setup { stencil, t_grid, y_grid, z_grid, conj, terminal_f })
}

/// Marches backward from slice `i_start` (whose values are `start`) down to
/// `t = 0`, returning slices `0..=i_start` concatenated.
fn march<T: Scalar>(
    s: &Setup<'_, T>,
    phi: &ValueField2D<T>,
    i_start: usize,
    start: &[T],
    options: &SchemeOptions,
    stats: &mut HjbiStats,
) -> Result<Vec<T>> {
    let st = &s.stencil;
    let (n_y, n_z) = (st.n_y, st.n_z);
    let per = n_y * n_z;
    let ts = s.t_grid.nodes();
    let cfl: T = lit(options.cfl);
    let worst = st.worst_case_coef();
    stats.cfl_policy = Some(options.cfl_policy);

    let mut out = vec![T::zero(); (i_start + 1) * per];
    out[i_start * per..].copy_from_slice(start);
    let mut cur = start.to_vec();
    let mut ham = vec![T::zero(); per];
    // every drift preset is time-homogeneous, so the candidates are fixed
    let cand: Vec<[T; 4]> = st.ys.iter().map(|&y| st.controls.drift_candidates(T::zero(), y)).collect();
    let edges = [0, n_z - 1];

    for it in (0..i_start).rev() {
        let (t_lo, t_hi) = (ts[it], ts[it + 1]);
        let phi_lo = phi.slice(it);
        let phi_hi = phi.slice(it + 1);
        let mut t = t_hi;
        let mut remaining = t_hi - t_lo;
        let mut fixed_steps = match options.cfl_policy {
            CflPolicy::WorstCase => Some(crate::hjb::substeps_for(remaining, worst, cfl)),
            CflPolicy::Adaptive => None,
        };
        while remaining > T::zero() {
            let v = &cur;
            let max_coef = ham
                .par_chunks_mut(n_z)
                .enumerate()
                .map(|(j, row)| st.row(v, j, &cand[j], row))
                .reduce(T::zero, T::max);
            let steps_left = match fixed_steps.as_mut() {
                Some(n) => {
                    let k = *n;
                    *n -= 1;
                    k
                }
                None => crate::hjb::substeps_for(remaining, max_coef, cfl),
            };
            let last = steps_left <= 1;
            let dt = if last { remaining } else { remaining / lit(steps_left as f64) };
            let t_new = if last { t_lo } else { t - dt };
            let w = (t_new - t_lo) / (t_hi - t_lo);
            cur.par_chunks_mut(n_z).zip(ham.par_chunks(n_z)).enumerate().for_each(|(j, (row, hrow))| {
                for k in 1..n_z - 1 {
                    row[k] = row[k] + dt * hrow[k];
                }
                let p = phi_lo[j] + (phi_hi[j] - phi_lo[j]) * w;
                for &k in &edges {
                    row[k] = st.zs[k] * p - s.conj[k];
                }
            });
            stats.substeps += 1;
            let dtf = to_f64(dt);
            stats.min_dt = if stats.substeps == 1 { dtf } else { stats.min_dt.min(dtf) };
            stats.max_dt = stats.max_dt.max(dtf);
            remaining = if last { T::zero() } else { remaining - dt };
            t = t_new;
        }
        if let Some(i) = cur.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(NodeReport {
                t: to_f64(t_lo),
                y: to_f64(st.ys[i / n_z]),
                z: Some(to_f64(st.zs[i % n_z])),
                value: to_f64(cur[i]),
            }));
        }
        let convex = max_z_convexity(&cur, n_y, n_z);
        let scale = cur.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        stats.max_convexity = stats.max_convexity.max(to_f64(convex));
        if convex > lit::<T>(1e-4) * scale.max(T::one()) {
            stats.concavity_warnings += 1;
            warn!("z-concavity violated by {convex} at t = {t_lo}");
        }
        out[it * per..(it + 1) * per].copy_from_slice(&cur);
    }
    Ok(out)
}

/// Largest undivided second difference in z over interior nodes of a slice.
pub(crate) fn max_z_convexity<T: Scalar>(slice: &[T], n_y: usize, n_z: usize) -> T {
    let mut worst = T::neg_infinity();
    for j in 0..n_y {
        let row = &slice[j * n_z..(j + 1) * n_z];
        for k in 1..n_z - 1 {
            worst = worst.max(row[k + 1] - lit::<T>(2.0) * row[k] + row[k - 1]);
        }
    }
    worst
}

/// Solves the truncated HJBI on `phi`'s `(t, y)` grid times an `n_z`-node
/// grid over the problem's z-box, and reads off the feedback policies.
///
/// `phi` must be the risk-free value of the same problem on the same grid; it
/// supplies the z-edge data `z φ - l*(z)`.
pub fn solve_hjbi<T: Scalar>(
    problem: &ControlProblem<T>,
    spec: &LossSpec<T>,
    phi: Arc<ValueField2D<T>>,
    n_z: usize,
    beta_bound: T,
    options: &SchemeOptions,
) -> Result<(ValueField3D<T>, PolicyField<T>)> {
    let controls = ControlGrid::new(problem, options.control_points)?;
    let s = setup(problem, spec, &phi, n_z, beta_bound, &controls)?;
    let n_t = s.t_grid.len();
    let (n_y, zs) = (s.stencil.n_y, &s.stencil.zs);
    let mut terminal = Vec::with_capacity(n_y * n_z);
    for j in 0..n_y {
        for k in 0..n_z {
            terminal.push(zs[k] * s.terminal_f[j] - s.conj[k]);
        }
    }
    let mut stats = HjbiStats::default();
    let values = march(&s, &phi, n_t - 1, &terminal, options, &mut stats)?;
    let field = ValueField3D {
        t_grid: s.t_grid,
        y_grid: s.y_grid,
        z_grid: s.z_grid,
        values,
        beta_bound,
        phi,
        terminal_f: s.terminal_f,
        conj: s.conj,
        stats,
    };
    let policy = extract_policy_3d(&field, problem, options)?;
    Ok((field, policy))
}

/// Re-solves `[0, θ]` with `field(θ, ·, ·)` as terminal data. On the nodes of
/// `[0, θ]` the result should reproduce `field`.
pub fn dpp_restart<T: Scalar>(
    field: &ValueField3D<T>,
    problem: &ControlProblem<T>,
    spec: &LossSpec<T>,
    theta: T,
    options: &SchemeOptions,
) -> Result<ValueField3D<T>> {
    let tol = field.t_grid.step() * lit(1e-9);
    let i_theta = field
        .t_grid
        .index_of(theta, tol)
        .filter(|&i| i > 0)
        .ok_or_else(|| invalid("theta", format!("{theta} is not a positive node of the time grid")))?;
    let controls = ControlGrid::new(problem, options.control_points)?;
    let s = setup(problem, spec, &field.phi, field.z_grid.len(), field.beta_bound, &controls)?;
    let mut stats = HjbiStats::default();
    let values = march(&s, &field.phi, i_theta, field.slice(i_theta), options, &mut stats)?;
    let t_grid = if i_theta + 1 == field.t_grid.len() {
        field.t_grid
    } else {
        UniformGrid::new(T::zero(), field.t_grid.node(i_theta), i_theta + 1)?
    };
    Ok(ValueField3D {
        t_grid,
        y_grid: field.y_grid,
        z_grid: field.z_grid,
        values,
        beta_bound: field.beta_bound,
        phi: field.phi.clone(),
        terminal_f: field.terminal_f.clone(),
        conj: field.conj.clone(),
        stats,
    })
}

/// `α*` minimizes the upwinded drift term over the control grid (ties to the
/// smallest control); `β*` maximizes the adversary term at interior z-nodes
/// and is zero on the z-edges, where the value is pinned.
pub fn extract_policy_3d<T: Scalar>(
    field: &ValueField3D<T>,
    problem: &ControlProblem<T>,
    options: &SchemeOptions,
) -> Result<PolicyField<T>> {
    let (sigma, _, _) = problem.scalar_parts()?;
    let controls = ControlGrid::new(problem, options.control_points)?;
    let (n_y, n_z) = (field.y_grid.len(), field.z_grid.len());
    let per = n_y * n_z;
    let (dy, dz) = (field.y_grid.step(), field.z_grid.step());
    let ys = field.y_grid.nodes();
    let zs = field.z_grid.nodes();
    let mut alpha = vec![T::zero(); field.values.len()];
    let mut beta = vec![T::zero(); field.values.len()];
    alpha
        .par_chunks_mut(per)
        .zip(beta.par_chunks_mut(per))
        .enumerate()
        .for_each(|(it, (a_out, b_out))| {
            let t = field.t_grid.node(it);
            let v = field.slice(it);
            for j in 0..n_y {
                for k in 0..n_z {
                    let col = |i: usize| v[i * n_z + k];
                    let (fwd, bwd) = y_diffs(col, j, n_y, T::one() / dy);
                    a_out[j * n_z + k] = controls.argmin(t, ys[j], fwd, bwd);
                    if k == 0 || k + 1 == n_z {
                        continue;
                    }
                    let at = |i: usize, kk: usize| v[i * n_z + kk];
                    let d_zz = snap([at(j, k + 1), -lit::<T>(2.0) * at(j, k), at(j, k - 1)]);
                    let jm = j.saturating_sub(1);
                    let jp = (j + 1).min(n_y - 1);
                    let d_yz = snap([at(jp, k + 1), -at(jp, k - 1), -at(jm, k + 1), at(jm, k - 1)]);
                    if d_zz == T::zero() && d_yz == T::zero() {
                        // the adversary's objective vanishes identically
                        continue;
                    }
                    let v_zz = d_zz / (dz * dz);
                    let v_yz = d_yz / (lit::<T>(2.0) * dz * lit::<T>((jp - jm) as f64) * dy);
                    b_out[j * n_z + k] = adversary_sup(v_zz, v_yz, zs[k], sigma, field.beta_bound).1;
                }
            }
        });
    PolicyField::new(field.t_grid, field.y_grid, field.z_grid, alpha, beta, (1, 1), field.beta_bound)
}

/// Sum of finite-difference terms, set to zero when it is within rounding of
/// the terms' magnitude.
fn snap<T: Scalar, const N: usize>(terms: [T; N]) -> T {
    let sum = terms.iter().fold(T::zero(), |a, &b| a + b);
    let mag = terms.iter().fold(T::zero(), |a, &b| a + b.abs());
    if sum.abs() <= lit::<T>(16.0) * T::epsilon() * mag {
        T::zero()
    } else {
        sum
    }
}
