//! Euler–Maruyama simulation of the controlled state
//! `dY = b(t, Y, α) dt + σ dW`, the density process `dZ = β Z dW`, and the
//! tilted state `dY = (b + σσ'β) dt + σ dW`.
//!
//! Every path draws its Brownian increments from its own ChaCha8 stream,
//! selected by the path index under a common seed, so batches are
//! reproducible and independent of the worker count. The three simulators
//! consume the streams identically: the same seed gives the same increments.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::policy::PolicyField;
use crate::problem::ControlProblem;
use crate::scalar::{lit, to_f64, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Record {
    /// Every time step.
    Full,
    /// Start and end only.
    TerminalOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SimParams {
    pub n_paths: usize,
    pub n_steps: usize,
    pub record: Record,
}

impl SimParams {
    pub fn new(n_paths: usize, n_steps: usize) -> Self {
        Self { n_paths, n_steps, record: Record::TerminalOnly }
    }

    pub fn full(mut self) -> Self {
        self.record = Record::Full;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.n_steps == 0 {
            return Err(invalid("batch", "need at least one path and one step"));
        }
        Ok(())
    }

    fn recorded(&self) -> usize {
        match self.record {
            Record::Full => self.n_steps + 1,
            Record::TerminalOnly => 2,
        }
    }
}

/// A seeded ensemble of sample paths.
///
/// `y_paths` is laid out `[path][recorded step][dim]` and `z_paths`
/// `[path][recorded step]`; with [`Record::TerminalOnly`] the two recorded
/// steps are the start and the end.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch<T> {
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub dt: T,
    pub start_time: T,
    pub dim: usize,
    pub recorded_steps: usize,
    pub y_paths: Vec<T>,
    pub z_paths: Option<Vec<T>>,
    /// Paths that left the y-box at least once and were clamped back.
    pub exit_count: usize,
    /// `W_T - W_s` per path and dimension.
    pub brownian_terminal: Vec<T>,
}

/// Mean, spread and range of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
}

impl SampleSummary {
    pub fn of<T: Scalar>(xs: &[T]) -> Self {
        let n = xs.len();
        let mean = xs.iter().map(|&x| to_f64(x)).sum::<f64>() / n as f64;
        let ss = xs.iter().map(|&x| (to_f64(x) - mean).powi(2)).sum::<f64>();
        let variance = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
        let (min, max) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            let x = to_f64(x);
            (lo.min(x), hi.max(x))
        });
        Self { n, mean, variance, std_error: (variance / n as f64).sqrt(), min, max }
    }
}

impl<T: Scalar> PathBatch<T> {
    /// State of `path` at recorded step `step`.
    pub fn y(&self, path: usize, step: usize) -> &[T] {
        let i = (path * self.recorded_steps + step) * self.dim;
        &self.y_paths[i..i + self.dim]
    }

    /// Coordinate `dim` of `Y_T` for every path.
    pub fn terminal_y(&self, dim: usize) -> Vec<T> {
        (0..self.n_paths).map(|p| self.y(p, self.recorded_steps - 1)[dim]).collect()
    }

    /// `Z_T` for every path, if the batch carries a density process.
    pub fn terminal_z(&self) -> Option<Vec<T>> {
        let z = self.z_paths.as_ref()?;
        Some((0..self.n_paths).map(|p| z[(p + 1) * self.recorded_steps - 1]).collect())
    }

    pub fn exit_rate(&self) -> f64 {
        self.exit_count as f64 / self.n_paths as f64
    }

    /// Time of recorded step `step`.
    pub fn time(&self, step: usize) -> T {
        let k = if self.recorded_steps == self.n_steps + 1 || step == 0 { step } else { self.n_steps };
        self.start_time + self.dt * lit(k as f64)
    }
}

/// Brownian increments for one path, `√dt · N(0, 1)` per dimension.
struct Increments<T> {
    rng: ChaCha8Rng,
    sqrt_dt: T,
}

impl<T: Scalar> Increments<T> {
    fn new(seed: u64, path: usize, dt: T) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        Self { rng, sqrt_dt: dt.sqrt() }
    }

    fn fill(&mut self, out: &mut [T]) {
        for w in out {
            let g: f64 = self.rng.sample(StandardNormal);
            *w = lit::<T>(g) * self.sqrt_dt;
        }
    }
}

/// Where the simulated clock starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Start<T> {
    pub s: T,
    pub y: Vec<T>,
}

/// Start of a density process; `y` is the state at which the adversary
/// policy is read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityStart<T> {
    pub s: T,
    pub z: T,
    pub y: T,
}

/// Level of `z` at which `simulate_y` reads the control policy.
pub const REFERENCE_Z: f64 = 1.0;

fn check_start<T: Scalar>(problem: &ControlProblem<T>, policy: &PolicyField<T>, start: &Start<T>) -> Result<T> {
    problem.validate()?;
    let d = problem.state_dim();
    if start.y.len() != d {
        return Err(invalid("start", format!("expected {d} coordinates")));
    }
    if !(start.s >= T::zero() && start.s < problem.horizon) {
        return Err(invalid("start", "start time outside [0, T)"));
    }
    if start.y.iter().zip(&problem.y_box).any(|(&y, &(lo, hi))| !(y >= lo && y <= hi)) {
        return Err(invalid("start", "start point outside the y-box"));
    }
    if policy.control_dim != problem.control_box.dim() {
        return Err(invalid("policy", "control dimension does not match the problem"));
    }
    if policy.noise_dim != d {
        return Err(invalid("policy", "adversary dimension does not match the state"));
    }
    Ok(start.s)
}

/// Euler–Maruyama for `Y` under the feedback control `α(t, y, REFERENCE_Z)`
/// (with `z` clamped to the policy's z-grid). Policies are gridded over the
/// first state coordinate. Paths leaving the y-box are clamped back and
/// counted in `exit_count`.
pub fn simulate_y<T: Scalar>(
    problem: &ControlProblem<T>,
    policy: &PolicyField<T>,
    start: &Start<T>,
    params: &SimParams,
    seed: u64,
) -> Result<PathBatch<T>> {
    simulate_state(problem, policy, start, params, seed, false)
}

/// Euler–Maruyama for `Y` with drift `b + σσ'β` together with the density
/// `Z` started at `REFERENCE_Z`; both controls are read at `(t, Y, Z)`.
/// Under the tilted measure `d log Z = β dW̃ + ½|β|² dt`. With `β ≡ 0` the
/// state paths coincide bit for bit with [`simulate_y`] under the same seed.
pub fn simulate_tilted<T: Scalar>(
    problem: &ControlProblem<T>,
    policy: &PolicyField<T>,
    start: &Start<T>,
    params: &SimParams,
    seed: u64,
) -> Result<PathBatch<T>> {
    simulate_state(problem, policy, start, params, seed, true)
}

fn simulate_state<T: Scalar>(
    problem: &ControlProblem<T>,
    policy: &PolicyField<T>,
    start: &Start<T>,
    params: &SimParams,
    seed: u64,
    tilted: bool,
) -> Result<PathBatch<T>> {
    params.validate()?;
    let s = check_start(problem, policy, start)?;
    let d = problem.state_dim();
    let m = problem.control_box.dim();
    let dt = (problem.horizon - s) / lit(params.n_steps as f64);
    let rec = params.recorded();
    let z_ref = lit::<T>(REFERENCE_Z).max(policy.z_grid.lo()).min(policy.z_grid.hi());
    let sigma = &problem.sigma;
    // σσ' for the tilt
    let mut sst = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            sst[i * d + j] = (0..d).map(|k| sigma[i * d + k] * sigma[j * d + k]).sum();
        }
    }
    let half: T = lit(0.5);

    let mut y_paths = vec![T::zero(); params.n_paths * rec * d];
    let mut z_paths = if tilted { Some(vec![T::zero(); params.n_paths * rec]) } else { None };
    let mut w_term = vec![T::zero(); params.n_paths * d];

    let simulate_path = |p: usize, y_out: &mut [T], z_out: Option<&mut [T]>, w_out: &mut [T]| -> bool {
        let mut inc = Increments::new(seed, p, dt);
        let mut y = start.y.clone();
        let mut z = T::one();
        let mut dw = vec![T::zero(); d];
        let mut a = vec![T::zero(); m];
        let mut beta = vec![T::zero(); d];
        let mut b = vec![T::zero(); d];
        let mut exited = false;
        y_out[..d].copy_from_slice(&y);
        let mut z_out = z_out;
        if let Some(zo) = z_out.as_deref_mut() {
            zo[0] = z;
        }
        for k in 0..params.n_steps {
            let t = s + dt * lit(k as f64);
            let zq = if tilted { z } else { z_ref };
            policy.alpha_at(t, y[0], zq, &mut a);
            problem.drift.eval(t, &y, &a, &mut b);
            inc.fill(&mut dw);
            let mut beta_sq = T::zero();
            let mut beta_dw = T::zero();
            if tilted {
                policy.beta_at(t, y[0], zq, &mut beta);
                for i in 0..d {
                    b[i] = b[i] + (0..d).map(|j| sst[i * d + j] * beta[j]).sum::<T>();
                    beta_sq = beta_sq + beta[i] * beta[i];
                    beta_dw = beta_dw + beta[i] * dw[i];
                }
            }
            for i in 0..d {
                let noise: T = (0..d).map(|j| sigma[i * d + j] * dw[j]).sum();
                y[i] = y[i] + b[i] * dt + noise;
                let (lo, hi) = problem.y_box[i];
                if y[i] < lo || y[i] > hi {
                    y[i] = y[i].max(lo).min(hi);
                    exited = true;
                }
                w_out[i] = w_out[i] + dw[i];
            }
            if tilted {
                z = z * (beta_dw + half * beta_sq * dt).exp();
            }
            let slot = match params.record {
                Record::Full => Some(k + 1),
                Record::TerminalOnly if k + 1 == params.n_steps => Some(1),
                Record::TerminalOnly => None,
            };
            if let Some(r) = slot {
                y_out[r * d..(r + 1) * d].copy_from_slice(&y);
                if let Some(zo) = z_out.as_deref_mut() {
                    zo[r] = z;
                }
            }
        }
        exited
    };

    let exit_count = match z_paths.as_mut() {
        Some(zp) => y_paths
            .par_chunks_mut(rec * d)
            .zip(zp.par_chunks_mut(rec))
            .zip(w_term.par_chunks_mut(d))
            .enumerate()
            .map(|(p, ((yo, zo), wo))| usize::from(simulate_path(p, yo, Some(zo), wo)))
            .sum(),
        None => y_paths
            .par_chunks_mut(rec * d)
            .zip(w_term.par_chunks_mut(d))
            .enumerate()
            .map(|(p, (yo, wo))| usize::from(simulate_path(p, yo, None, wo)))
            .sum(),
    };

    Ok(PathBatch {
        seed,
        n_paths: params.n_paths,
        n_steps: params.n_steps,
        dt,
        start_time: s,
        dim: d,
        recorded_steps: rec,
        y_paths,
        z_paths,
        exit_count,
        brownian_terminal: w_term,
    })
}

/// The density process `dZ = β Z dW` with the exact log-step
/// `Z ← Z exp(β ΔW - ½|β|² Δt)`, so every path stays positive. The adversary
/// is read at `(t, start.y, Z)`. The returned batch carries `Z` in
/// `z_paths` and the frozen `start.y` in `y_paths`.
pub fn simulate_z<T: Scalar>(
    start: &DensityStart<T>,
    horizon: T,
    policy: &PolicyField<T>,
    params: &SimParams,
    seed: u64,
) -> Result<PathBatch<T>> {
    params.validate()?;
    if !(start.z > T::zero() && start.z.is_finite()) {
        return Err(invalid("start", "density start must be positive"));
    }
    if !(start.s >= T::zero() && start.s < horizon) {
        return Err(invalid("start", "start time outside [0, T)"));
    }
    let d = policy.noise_dim;
    let dt = (horizon - start.s) / lit(params.n_steps as f64);
    let rec = params.recorded();
    let half: T = lit(0.5);
    let mut z_paths = vec![T::zero(); params.n_paths * rec];
    let mut w_term = vec![T::zero(); params.n_paths * d];
    z_paths
        .par_chunks_mut(rec)
        .zip(w_term.par_chunks_mut(d))
        .enumerate()
        .for_each(|(p, (zo, wo))| {
            let mut inc = Increments::new(seed, p, dt);
            let mut dw = vec![T::zero(); d];
            let mut beta = vec![T::zero(); d];
            let mut z = start.z;
            zo[0] = z;
            for k in 0..params.n_steps {
                let t = start.s + dt * lit(k as f64);
                policy.beta_at(t, start.y, z, &mut beta);
                inc.fill(&mut dw);
                let mut expo = T::zero();
                for i in 0..d {
                    expo = expo + beta[i] * dw[i] - half * beta[i] * beta[i] * dt;
                    wo[i] = wo[i] + dw[i];
                }
                z = z * expo.exp();
                match params.record {
                    Record::Full => zo[k + 1] = z,
                    Record::TerminalOnly if k + 1 == params.n_steps => zo[1] = z,
                    Record::TerminalOnly => {}
                }
            }
        });
    Ok(PathBatch {
        seed,
        n_paths: params.n_paths,
        n_steps: params.n_steps,
        dt,
        start_time: start.s,
        dim: 1,
        recorded_steps: rec,
        y_paths: vec![start.y; params.n_paths * rec],
        z_paths: Some(z_paths),
        exit_count: 0,
        brownian_terminal: w_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UniformGrid;
    use crate::problem::{ControlBox, Drift, Terminal};

    fn constant_policy(alpha: f64, beta: f64) -> PolicyField<f64> {
        PolicyField::constant(
            UniformGrid::new(0.0, 1.0, 3).unwrap(),
            UniformGrid::new(-8.0, 8.0, 3).unwrap(),
            UniformGrid::new(0.05, 8.0, 3).unwrap(),
            &[alpha],
            &[beta],
            beta.abs().max(1.0),
        )
        .unwrap()
    }

    fn problem() -> ControlProblem<f64> {
        ControlProblem::scalar(Drift::identity(), 1.0, ControlBox::interval(-1.0, 1.0), Terminal::Tanh { scale: 1.0, amplitude: 1.0 }, 1.0)
    }

    #[test]
    fn terminal_only_and_full_records_agree() {
        let p = problem();
        let pol = constant_policy(0.5, 0.0);
        let start = Start { s: 0.0, y: vec![0.2] };
        let a = simulate_y(&p, &pol, &start, &SimParams::new(50, 20), 3).unwrap();
        let b = simulate_y(&p, &pol, &start, &SimParams::new(50, 20).full(), 3).unwrap();
        assert_eq!(a.terminal_y(0), b.terminal_y(0));
        assert_eq!(b.recorded_steps, 21);
        assert_eq!(b.y(7, 0), &[0.2]);
        assert!((b.time(20) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_beta_keeps_density_fixed() {
        let pol = constant_policy(0.0, 0.0);
        let start = DensityStart { s: 0.0, z: 0.7, y: 0.0 };
        let batch = simulate_z(&start, 1.0, &pol, &SimParams::new(100, 10), 1).unwrap();
        assert!(batch.terminal_z().unwrap().iter().all(|&z| z == 0.7));
    }

    #[test]
    fn rejects_bad_starts() {
        let p = problem();
        let pol = constant_policy(0.0, 0.0);
        let params = SimParams::new(10, 10);
        assert!(simulate_y(&p, &pol, &Start { s: 0.0, y: vec![9.0] }, &params, 0).is_err());
        assert!(simulate_y(&p, &pol, &Start { s: 1.0, y: vec![0.0] }, &params, 0).is_err());
        assert!(simulate_y(&p, &pol, &Start { s: 0.0, y: vec![0.0] }, &SimParams::new(0, 10), 0).is_err());
        let start = DensityStart { s: 0.0, z: 0.0, y: 0.0 };
        assert!(simulate_z(&start, 1.0, &pol, &params, 0).is_err());
    }

    #[test]
    fn summary_of_known_sample() {
        let s = SampleSummary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!((s.min, s.max), (1.0, 4.0));
    }
}
