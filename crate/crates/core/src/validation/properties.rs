use serde::Serialize;

use crate::error::Result;
use crate::hjbi::ValueField3D;
use crate::loss::LossSpec;
use crate::scalar::{to_f64, Scalar};

/// Grid coordinates of a reported node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeCoord {
    pub t: f64,
    pub y: f64,
    pub z: f64,
}

/// One structural check: the worst violation found and the tolerance it
/// was held to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
    pub tolerance: f64,
    pub at: Option<NodeCoord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub loss: String,
    pub beta_bound: f64,
    pub value_scale: f64,
    pub eps_grid: f64,
    pub eps_conc: f64,
    pub checks: Vec<Check>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Tracks the largest violation and where it happened.
struct Worst {
    value: f64,
    at: Option<NodeCoord>,
}

impl Worst {
    fn new() -> Self {
        Self { value: 0.0, at: None }
    }

    fn offer(&mut self, v: f64, at: impl FnOnce() -> NodeCoord) {
        if v > self.value || v.is_nan() {
            self.value = if v.is_nan() { f64::INFINITY } else { v };
            self.at = Some(at());
        }
    }

    fn into_check(self, name: &str, tolerance: f64) -> Check {
        Check { name: name.to_string(), passed: self.value <= tolerance, worst: self.value, tolerance, at: self.at }
    }
}

/// Largest difference between a field and a coarser nested solve on the
/// coarse nodes: the grid-error estimate `ε_grid`.
pub fn refinement_error<T: Scalar>(fine: &ValueField3D<T>, coarse: &ValueField3D<T>) -> Result<f64> {
    fine.max_diff_on_coarse(coarse).map(to_f64)
}

/// Largest deviation of a restarted solve from the original on `[0, θ]`.
pub fn dpp_deviation<T: Scalar>(field: &ValueField3D<T>, restarted: &ValueField3D<T>) -> Result<f64> {
    field.max_diff_prefix(restarted, restarted.t_grid.len()).map(to_f64)
}

/// Runs the structural checks on a solved field:
///
/// * `terminal`: `V(T, y, z) = z f(y) - l*(z)` to machine precision,
/// * `z_edges`: `V = z φ - l*` on both z-edges to machine precision,
/// * `lower_bound`: `V ≥ z φ - l* - ε_grid`,
/// * `z_concavity`: undivided second differences in z at most `1e-4 ·` scale,
/// * `essential_bounds`: `min f - ε_grid ≤ V(t, y, 1) ≤ max f + ε_grid`, when
///   `z = 1` is inside the grid (read with [`ValueField3D::sample`]),
/// * `beta_monotonicity`: each field in `n_scan` (ordered by `beta_bound`)
///   lies above its predecessor within `ε_grid`, at every node.
///
/// `l*` is evaluated from `spec`, not taken from the field.
pub fn property_scan<T: Scalar>(
    field: &ValueField3D<T>,
    spec: &LossSpec<T>,
    eps_grid: f64,
    n_scan: &[&ValueField3D<T>],
) -> PropertyReport {
    let (n_t, n_y, n_z) = (field.t_grid.len(), field.y_grid.len(), field.z_grid.len());
    let ts = field.t_grid.nodes();
    let ys = field.y_grid.nodes();
    let zs = field.z_grid.nodes();
    let conj: Vec<f64> = zs.iter().map(|&z| spec.conj(z).finite().map_or(f64::INFINITY, to_f64)).collect();
    let scale = field.values.iter().fold(0.0f64, |m, &v| m.max(to_f64(v).abs()));
    let machine = 8.0 * to_f64(T::epsilon()) * (1.0 + scale);
    let eps_conc = 1e-4 * scale;
    let coord = |it: usize, j: usize, k: usize| NodeCoord { t: to_f64(ts[it]), y: to_f64(ys[j]), z: to_f64(zs[k]) };
    let v = |it: usize, j: usize, k: usize| to_f64(field.at(it, j, k));
    let phi = |it: usize, j: usize| to_f64(field.phi.at(it, j));
    let idle = |it: usize, j: usize, k: usize| to_f64(zs[k]) * phi(it, j) - conj[k];

    let mut terminal = Worst::new();
    for j in 0..n_y {
        let f = to_f64(field.terminal_f[j]);
        for k in 0..n_z {
            let exact = to_f64(zs[k]) * f - conj[k];
            terminal.offer((v(n_t - 1, j, k) - exact).abs(), || coord(n_t - 1, j, k));
        }
    }

    let mut edges = Worst::new();
    let mut lower = Worst::new();
    let mut concave = Worst::new();
    for it in 0..n_t {
        for j in 0..n_y {
            for k in [0, n_z - 1] {
                edges.offer((v(it, j, k) - idle(it, j, k)).abs(), || coord(it, j, k));
            }
            for k in 0..n_z {
                lower.offer(idle(it, j, k) - v(it, j, k), || coord(it, j, k));
            }
            for k in 1..n_z - 1 {
                concave.offer(v(it, j, k + 1) - 2.0 * v(it, j, k) + v(it, j, k - 1), || coord(it, j, k));
            }
        }
    }

    let mut checks = vec![
        terminal.into_check("terminal", machine),
        edges.into_check("z_edges", machine),
        lower.into_check("lower_bound", eps_grid + machine),
        concave.into_check("z_concavity", eps_conc),
    ];

    let one = T::one();
    if field.z_grid.lo() <= one && one <= field.z_grid.hi() {
        let (f_lo, f_hi) = field
            .terminal_f
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &f| (lo.min(to_f64(f)), hi.max(to_f64(f))));
        let mut bounds = Worst::new();
        for it in 0..n_t {
            for j in 0..n_y {
                let w = to_f64(field.sample(ts[it], ys[j], one));
                bounds.offer((w - f_hi).max(f_lo - w), || NodeCoord { t: to_f64(ts[it]), y: to_f64(ys[j]), z: 1.0 });
            }
        }
        checks.push(bounds.into_check("essential_bounds", eps_grid + machine));
    }

    if n_scan.len() > 1 {
        let mut fields: Vec<&ValueField3D<T>> = n_scan.to_vec();
        fields.sort_by(|a, b| a.beta_bound.partial_cmp(&b.beta_bound).unwrap_or(std::cmp::Ordering::Equal));
        let mut mono = Worst::new();
        for pair in fields.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let same = lo.t_grid.same_as(&hi.t_grid) && lo.y_grid.same_as(&hi.y_grid) && lo.z_grid.same_as(&hi.z_grid);
            if !same {
                mono.offer(f64::INFINITY, || coord(0, 0, 0));
                continue;
            }
            for (i, (&a, &b)) in lo.values.iter().zip(&hi.values).enumerate() {
                let (it, rest) = (i / (n_y * n_z), i % (n_y * n_z));
                mono.offer(to_f64(a) - to_f64(b), || coord(it, rest / n_z, rest % n_z));
            }
        }
        checks.push(mono.into_check("beta_monotonicity", eps_grid + machine));
    }

    PropertyReport {
        loss: spec.name().to_string(),
        beta_bound: to_f64(field.beta_bound),
        value_scale: scale,
        eps_grid,
        eps_conc,
        checks,
    }
}
