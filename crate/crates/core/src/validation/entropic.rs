use crate::error::{Error, NodeReport, Result};
use crate::hjb::{solve_hjb, SchemeOptions, ValueField2D};
use crate::problem::ControlProblem;
use crate::scalar::{to_f64, Scalar};

/// `log inf_α E[exp f(Y_T)]` on a `(t, y)` grid: the risk-free HJB with
/// terminal `exp(f - max f)`, logged and shifted back. For the entropic loss
/// this is `V(t, y, 1)`.
pub fn entropic_reduction<T: Scalar>(
    problem: &ControlProblem<T>,
    grid: (usize, usize),
    options: &SchemeOptions,
) -> Result<ValueField2D<T>> {
    let (_, (lo, hi), _) = problem.scalar_parts()?;
    let f = problem.terminal;
    let ys = crate::grid::UniformGrid::new(lo, hi, grid.1)?.nodes();
    let shift = ys.iter().map(|&y| f.eval(y)).fold(T::neg_infinity(), T::max);
    let mut field = solve_hjb(problem, |y| (f.eval(y) - shift).exp(), format!("exp({})", f.describe()), grid, options)?;
    let n_y = field.y_grid.len();
    for (i, v) in field.values.iter_mut().enumerate() {
        if !(*v > T::zero()) {
            let (it, j) = (i / n_y, i % n_y);
            return Err(Error::NonFinite(NodeReport {
                t: to_f64(field.t_grid.node(it)),
                y: to_f64(field.y_grid.node(j)),
                z: None,
                value: to_f64(*v),
            }));
        }
        *v = v.ln() + shift;
    }
    let last = (field.t_grid.len() - 1) * n_y;
    for (v, &y) in field.values[last..].iter_mut().zip(&ys) {
        *v = f.eval(y);
    }
    field.terminal_desc = f.describe();
    Ok(field)
}
