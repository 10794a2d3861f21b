//! Independent oracles and structural checks for the PDE solvers.

mod avar;
mod entropic;
pub mod fixtures;
mod mc;
mod properties;
mod rsweep;

pub use avar::{avar_gaussian_oracle, GaussianShortfall};
pub use entropic::entropic_reduction;
pub use mc::{mc_policy_eval, McEstimate, MC_BATCHES};
pub use properties::{dpp_deviation, property_scan, refinement_error, Check, NodeCoord, PropertyReport};
pub use rsweep::{r_sweep_many, r_sweep_oracle, RSweep};

/// `|a - b| ≤ rel · max(|a|, |b|) + abs`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}
