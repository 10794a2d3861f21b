//! Optimized certainty equivalents of finite empirical distributions:
//! the primal `inf_r (E[l(X - r)] + r)`, the discrete dual over densities,
//! and a sorting formula for average value-at-risk.

use crate::error::{invalid, Result};
use crate::loss::LossSpec;
use crate::optim::minimize_convex;
use crate::scalar::{lit, Scalar};

/// Weighted outcomes of a random variable `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution<T> {
    outcomes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> EmpiricalDistribution<T> {
    pub fn new(outcomes: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(invalid("outcomes", "empty distribution"));
        }
        if outcomes.len() != weights.len() {
            return Err(invalid(
                "weights",
                format!("{} weights for {} outcomes", weights.len(), outcomes.len()),
            ));
        }
        if let Some(x) = outcomes.iter().find(|x| !x.is_finite()) {
            return Err(invalid("outcomes", format!("non-finite outcome {x}")));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= T::zero())) {
            return Err(invalid("weights", format!("negative or NaN weight {w}")));
        }
        let total: T = weights.iter().copied().sum();
        // summation rounding grows with the number of terms
        let tol = lit::<T>(1e-12).max(T::epsilon() * lit(4.0 * (weights.len() as f64 + 4.0)));
        if (total - T::one()).abs() > tol {
            return Err(invalid("weights", format!("sum to {total}, not 1")));
        }
        Ok(Self { outcomes, weights })
    }

    /// Equal weights.
    pub fn uniform(outcomes: Vec<T>) -> Result<Self> {
        let n = outcomes.len().max(1);
        let w = T::one() / lit(n as f64);
        Self::new(outcomes, vec![w; n])
    }

    pub fn outcomes(&self) -> &[T] {
        &self.outcomes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn min(&self) -> T {
        self.outcomes.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.outcomes.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn mean(&self) -> T {
        self.outcomes.iter().zip(&self.weights).map(|(&x, &w)| x * w).sum()
    }

    /// `E[l(X - r)] + r`.
    pub fn oce_objective(&self, spec: &LossSpec<T>, r: T) -> T {
        self.outcomes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * spec.loss(x - r))
            .sum::<T>()
            + r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OceResult<T> {
    pub value: T,
    pub r_star: T,
    pub iterations: usize,
}

/// `ρ(X) = inf_r (E[l(X - r)] + r)` by bracketing and golden section over the
/// convex map `r ↦ E[l(X - r)] + r`. `tol` is the accuracy in `r`.
pub fn oce_primal<T: Scalar>(dist: &EmpiricalDistribution<T>, spec: &LossSpec<T>, tol: T) -> Result<OceResult<T>> {
    if !(tol > T::zero()) {
        return Err(invalid("tol", "must be positive"));
    }
    let (lo, hi) = (dist.min() - T::one(), dist.max() + T::one());
    let m = minimize_convex(|r| dist.oce_objective(spec, r), lo, hi, tol)?;
    Ok(OceResult { value: m.value, r_star: m.arg, iterations: m.iterations })
}

/// The dual value `max { Σ w_i (z_i x_i - l*(z_i)) : z_i ∈ dom l*, Σ w_i z_i = 1 }`.
///
/// For a multiplier `λ` every `z_i` maximizing `z (x_i - λ) - l*(z)` lies in
/// the subdifferential `∂l(x_i - λ)`. The multiplier is found by bisection on
/// the budget `Σ w_i z_i(λ) = 1` to `tol / 10`; the final densities are the
/// convex combination of the two bracket ends that meets the budget exactly,
/// which also splits atoms at a kink of `l`.
pub fn oce_dual_discrete<T: Scalar>(dist: &EmpiricalDistribution<T>, spec: &LossSpec<T>, tol: T) -> Result<T> {
    if !(tol > T::zero()) {
        return Err(invalid("tol", "must be positive"));
    }
    let xs = dist.outcomes();
    let ws = dist.weights();
    let lower = |lambda: T| -> (Vec<T>, T) {
        let z: Vec<T> = xs.iter().map(|&x| spec.subdifferential(x - lambda).0).collect();
        let budget = z.iter().zip(ws).map(|(&z, &w)| z * w).sum();
        (z, budget)
    };
    let upper = |lambda: T| -> (Vec<T>, T) {
        let z: Vec<T> = xs.iter().map(|&x| spec.subdifferential(x - lambda).1).collect();
        let budget = z.iter().zip(ws).map(|(&z, &w)| z * w).sum();
        (z, budget)
    };

    // budget is nonincreasing in λ; 1 ∈ ∂l(0) brackets it on [min-1, max+1]
    let mut a = dist.min() - T::one();
    let mut b = dist.max() + T::one();
    let target = T::one();
    let mut expansions = 0;
    while lower(a).1 < target || upper(b).1 > target {
        if expansions == 60 {
            return Err(crate::error::Error::NoConvergence("dual multiplier not bracketed".into()));
        }
        let w = b - a;
        if lower(a).1 < target {
            a = a - w;
        }
        if upper(b).1 > target {
            b = b + w;
        }
        expansions += 1;
    }
    let eps = tol / lit(10.0);
    let mut exact = None;
    while b - a > eps {
        let mid = (a + b) * lit(0.5);
        if mid <= a || mid >= b {
            break;
        }
        if lower(mid).1 > target {
            a = mid;
        } else if upper(mid).1 < target {
            b = mid;
        } else {
            exact = Some(mid);
            break;
        }
    }
    // one side spends at least the budget, the other at most; blend to hit it
    let ((z_hi, h_hi), (z_lo, h_lo)) = match exact {
        Some(m) => (upper(m), lower(m)),
        None => (lower(a), upper(b)),
    };
    let theta = if h_hi - h_lo > T::zero() { (target - h_lo) / (h_hi - h_lo) } else { T::one() };
    let theta = theta.max(T::zero()).min(T::one());
    let domain = spec.conj_domain();
    let mut value = T::zero();
    for i in 0..xs.len() {
        // the blend of two in-domain endpoints can round one ulp outside
        let mut z = (theta * z_hi[i] + (T::one() - theta) * z_lo[i]).max(domain.lo);
        if let Some(hi) = domain.hi {
            z = z.min(hi);
        }
        let conj = spec.conj(z).finite().ok_or_else(|| invalid("loss", "dual density outside the conjugate domain"))?;
        value = value + ws[i] * (z * xs[i] - conj);
    }
    Ok(value)
}

/// Average value-at-risk: the mean of the worst (largest) `γ` mass of `X`,
/// splitting the atom at the quantile.
pub fn avar_closed_form<T: Scalar>(dist: &EmpiricalDistribution<T>, gamma: T) -> Result<T> {
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(invalid("gamma", format!("must lie in (0, 1), got {gamma}")));
    }
    let mut pairs: Vec<(T, T)> = dist.outcomes().iter().copied().zip(dist.weights().iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite outcomes"));
    let mut mass = T::zero();
    let mut acc = T::zero();
    for (x, w) in pairs {
        let take = w.min(gamma - mass);
        if take <= T::zero() {
            break;
        }
        acc = acc + take * x;
        mass = mass + take;
    }
    Ok(acc / gamma)
}

/// `log Σ w_i e^{x_i}`, shifted by the maximum for stability.
pub fn log_mean_exp<T: Scalar>(dist: &EmpiricalDistribution<T>) -> T {
    let m = dist.max();
    let s: T = dist
        .outcomes()
        .iter()
        .zip(dist.weights())
        .map(|(&x, &w)| w * (x - m).exp())
        .sum();
    m + s.ln()
}
