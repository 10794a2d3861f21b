//! The two reference problems the suite is calibrated on.

use std::sync::Arc;
use std::time::Instant;

use crate::error::Result;
use crate::grid::UniformGrid;
use crate::hjb::{solve_hjb, SchemeOptions, ValueField2D};
use crate::hjbi::{solve_hjbi, ValueField3D};
use crate::loss::LossSpec;
use crate::policy::PolicyField;
use crate::problem::{ControlBox, ControlProblem, Drift, Terminal};

/// A problem, its loss, and the grids it is solved and checked on.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub problem: ControlProblem<f64>,
    pub spec: LossSpec<f64>,
    /// `(n_t, n_y, n_z)` of the shipped solve.
    pub grid: (usize, usize, usize),
    /// Nested grid with half the cells on every axis, for `ε_grid`.
    pub coarse_grid: (usize, usize, usize),
    pub beta_bound: f64,
    pub y0: f64,
    /// `(n_t, n_y)` for the one-dimensional oracle solves.
    pub oracle_grid: (usize, usize),
    pub r_grid: UniformGrid<f64>,
}

/// A solved field with its policy and the risk-free field behind it.
#[derive(Debug, Clone)]
pub struct Solved {
    pub phi: Arc<ValueField2D<f64>>,
    pub field: ValueField3D<f64>,
    pub policy: PolicyField<f64>,
    pub seconds: f64,
}

/// Entropic loss, `b = a` with `a ∈ [-1, 1]`, `σ = 1`, `T = 1`,
/// `f(y) = tanh(y)`.
pub fn tanh_entropic() -> Fixture {
    let problem = ControlProblem::scalar(
        Drift::identity(),
        1.0,
        ControlBox::interval(-1.0, 1.0),
        Terminal::Tanh { scale: 1.0, amplitude: 1.0 },
        1.0,
    );
    Fixture {
        name: "tanh-entropic",
        problem,
        spec: LossSpec::entropic(),
        grid: (201, 201, 81),
        coarse_grid: (101, 101, 41),
        beta_bound: 8.0,
        y0: 0.0,
        oracle_grid: (101, 1601),
        r_grid: UniformGrid::new(-4.0, 4.0, 41).expect("static grid"),
    }
}

/// AVaR at `γ = 0.5`, no control, `σ = 1`, `T = 1`,
/// `f(y) = clamp(y, -5, 5)`, on `y ∈ [-8, 8]` and `z ∈ [0, 1/γ]`.
pub fn avar_uncontrolled() -> Fixture {
    let spec = LossSpec::avar(0.5).expect("static level");
    let problem = ControlProblem::scalar(
        Drift::zero(),
        1.0,
        ControlBox::singleton(0.0),
        Terminal::ClampedLinear { slope: 1.0, lo: -5.0, hi: 5.0 },
        1.0,
    )
    .with_z_box_for(&spec);
    Fixture {
        name: "avar-uncontrolled",
        problem,
        spec,
        grid: (101, 161, 41),
        coarse_grid: (51, 81, 21),
        beta_bound: 8.0,
        y0: 0.0,
        oracle_grid: (101, 1601),
        r_grid: UniformGrid::new(-7.0, 7.0, 57).expect("static grid"),
    }
}

impl Fixture {
    pub fn all() -> Vec<Fixture> {
        vec![tanh_entropic(), avar_uncontrolled()]
    }

    /// Solves the risk-free problem and the HJBI on `grid` with adversary
    /// bound `beta_bound`.
    pub fn solve(&self, grid: (usize, usize, usize), beta_bound: f64, options: &SchemeOptions) -> Result<Solved> {
        let start = Instant::now();
        let f = self.problem.terminal;
        let phi = Arc::new(solve_hjb(&self.problem, |y| f.eval(y), f.describe(), (grid.0, grid.1), options)?);
        let (field, policy) = solve_hjbi(&self.problem, &self.spec, phi.clone(), grid.2, beta_bound, options)?;
        Ok(Solved { phi, field, policy, seconds: start.elapsed().as_secs_f64() })
    }

    pub fn solve_shipped(&self, options: &SchemeOptions) -> Result<Solved> {
        self.solve(self.grid, self.beta_bound, options)
    }
}
