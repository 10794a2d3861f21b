use serde::Serialize;

use crate::error::{invalid, Result};
use crate::loss::LossSpec;
use crate::oce::{oce_primal, EmpiricalDistribution};
use crate::policy::PolicyField;
use crate::problem::ControlProblem;
use crate::scalar::{lit, to_f64, Scalar};
use crate::sde::{simulate_y, SimParams, Start};

/// Sub-ensembles used for the standard error.
pub const MC_BATCHES: usize = 20;

/// Forward estimate of `ρ(f(Y_T))` under a feedback policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    /// Spread of the sub-ensemble values over `√MC_BATCHES`.
    pub std_error: f64,
    pub batch_values: Vec<f64>,
    pub exit_count: usize,
}

/// Simulates `Y` under `policy`, evaluates the OCE of `f(Y_T)` on the whole
/// ensemble, and again on each of [`MC_BATCHES`] equal sub-ensembles for the
/// standard error.
pub fn mc_policy_eval<T: Scalar>(
    problem: &ControlProblem<T>,
    spec: &LossSpec<T>,
    policy: &PolicyField<T>,
    start: &Start<T>,
    params: &SimParams,
    seed: u64,
) -> Result<McEstimate> {
    if params.n_paths < 2 * MC_BATCHES {
        return Err(invalid("batch", format!("need at least {} paths", 2 * MC_BATCHES)));
    }
    let batch = simulate_y(problem, policy, start, params, seed)?;
    let f = problem.terminal;
    let outcomes: Vec<T> = batch.terminal_y(0).into_iter().map(|y| f.eval(y)).collect();
    let tol: T = lit(1e-10);
    let value = oce_primal(&EmpiricalDistribution::uniform(outcomes.clone())?, spec, tol)?.value;
    let size = outcomes.len() / MC_BATCHES;
    let batch_values = outcomes
        .chunks_exact(size)
        .take(MC_BATCHES)
        .map(|c| Ok(to_f64(oce_primal(&EmpiricalDistribution::uniform(c.to_vec())?, spec, tol)?.value)))
        .collect::<Result<Vec<f64>>>()?;
    let k = batch_values.len() as f64;
    let mean = batch_values.iter().sum::<f64>() / k;
    let var = batch_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(McEstimate { value: to_f64(value), std_error: (var / k).sqrt(), batch_values, exit_count: batch.exit_count })
}
