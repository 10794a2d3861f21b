use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{invalid, Result};
use crate::optim::golden_min;

/// Expected shortfall of `N(mu, sd²)` at tail mass `gamma`, by two routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianShortfall {
    /// `mu + sd φ(Φ⁻¹(1 - γ)) / γ`.
    pub identity: f64,
    /// `inf_r r + E[(X - r)⁺] / γ` with the expectation by double-exponential
    /// quadrature.
    pub quadrature: f64,
}

impl GaussianShortfall {
    pub fn value(&self) -> f64 {
        self.identity
    }

    pub fn discrepancy(&self) -> f64 {
        (self.identity - self.quadrature).abs()
    }
}

pub fn avar_gaussian_oracle(mu: f64, sd: f64, gamma: f64) -> Result<GaussianShortfall> {
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(invalid("sd", "must be positive"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", format!("{gamma} not in (0, 1)")));
    }
    let std = Normal::standard();
    let q = std.inverse_cdf(1.0 - gamma);
    let identity = mu + sd * std.pdf(q) / gamma;

    // the standardized problem, shifted and scaled afterwards
    let density = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let excess = |r: f64| {
        quadrature::double_exponential::integrate(|x| (x - r) * density(x), r, r.max(0.0) + 40.0, 1e-15).integral
    };
    let objective = |r: f64| r + excess(r) / gamma;
    let (_, best) = golden_min(objective, -12.0, 12.0, 1e-12);
    Ok(GaussianShortfall { identity, quadrature: mu + sd * best })
}
