//! Risk-sensitive stochastic control for optimized certainty equivalents.
//!
//! The risk of a terminal cost `f(Y_T)` is measured by an OCE
//! `ρ(X) = inf_r E[l(X - r)] + r`. Minimizing it over feedback controls is
//! turned into a Markovian game on the enlarged state `(t, y, z)`, whose
//! value `V` solves an HJBI equation. This crate provides the loss library,
//! empirical OCE evaluators, the risk-free and enlarged-state PDE solvers,
//! an SDE simulator, and the oracles used to cross-check them.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64` aliases below fix the common double-precision case.

pub mod control;
pub mod error;
pub mod export;
pub mod ext;
pub mod grid;
pub mod hjb;
pub mod hjbi;
pub mod loss;
pub mod oce;
pub mod optim;
pub mod policy;
pub mod problem;
pub mod scalar;
pub mod sde;
pub mod validation;

pub use error::{Error, NodeReport, Result};
pub use ext::ExtReal;
pub use grid::UniformGrid;
pub use hjb::{extract_policy_2d, solve_hjb, CflPolicy, SchemeOptions, SolveStats, ValueField2D};
pub use hjbi::{adversary_sup, dpp_restart, extract_policy_3d, solve_hjbi, HamiltonianInput, ValueField3D};
pub use loss::{check_assumptions, conjugate_numeric, preset, AssumptionReport, LossSpec};
pub use oce::{avar_closed_form, oce_dual_discrete, oce_primal, EmpiricalDistribution, OceResult};
pub use policy::PolicyField;
pub use problem::{ControlBox, ControlProblem, Drift, Terminal};
pub use scalar::Scalar;
pub use sde::{simulate_tilted, simulate_y, simulate_z, DensityStart, PathBatch, Record, SampleSummary, SimParams, Start};

/// Version of this library.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type LossSpecF64 = LossSpec<f64>;
pub type ControlProblemF64 = ControlProblem<f64>;
pub type EmpiricalDistributionF64 = EmpiricalDistribution<f64>;
pub type ValueField2DF64 = ValueField2D<f64>;
pub type ValueField3DF64 = ValueField3D<f64>;
pub type PolicyFieldF64 = PolicyField<f64>;
pub type LossSpecF32 = LossSpec<f32>;
pub type EmpiricalDistributionF32 = EmpiricalDistribution<f32>;
