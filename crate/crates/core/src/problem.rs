//! The controlled diffusion `dY = b(t, Y, α) dt + σ dW` with a terminal cost,
//! plus the truncated computational box the solvers work on.

use log::warn;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::loss::LossSpec;
use crate::scalar::{lit, to_f64, Scalar};

/// Drift presets. Vectors are row-major: `mu ∈ ℝ^d`, `gain ∈ ℝ^{d×m}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Drift<T> {
    /// `b = μ`; the control has no effect.
    Constant { mu: Vec<T> },
    /// `b = μ + G a`.
    Affine { mu: Vec<T>, gain: Vec<T> },
    /// `b = κ (m - y) + G a`.
    MeanReverting { kappa: T, mean: Vec<T>, gain: Vec<T> },
}

impl<T: Scalar> Drift<T> {
    /// `b(t, y, a) = a` in one dimension.
    pub fn identity() -> Self {
        Drift::Affine { mu: vec![T::zero()], gain: vec![T::one()] }
    }

    pub fn zero() -> Self {
        Drift::Constant { mu: vec![T::zero()] }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Drift::Constant { mu } | Drift::Affine { mu, .. } => mu.len(),
            Drift::MeanReverting { mean, .. } => mean.len(),
        }
    }

    fn gain(&self) -> Option<&[T]> {
        match self {
            Drift::Constant { .. } => None,
            Drift::Affine { gain, .. } | Drift::MeanReverting { gain, .. } => Some(gain),
        }
    }

    pub fn eval(&self, _t: T, y: &[T], a: &[T], out: &mut [T]) {
        match self {
            Drift::Constant { mu } => out.copy_from_slice(mu),
            Drift::Affine { mu, .. } => out.copy_from_slice(mu),
            Drift::MeanReverting { kappa, mean, .. } => {
                for ((o, &m), &yi) in out.iter_mut().zip(mean).zip(y) {
                    *o = *kappa * (m - yi);
                }
            }
        }
        if let Some(gain) = self.gain() {
            let m = a.len();
            for (i, o) in out.iter_mut().enumerate() {
                for (k, &ak) in a.iter().enumerate() {
                    *o = *o + gain[i * m + k] * ak;
                }
            }
        }
    }

    /// Scalar drift in one dimension.
    #[inline]
    pub fn eval_scalar(&self, t: T, y: T, a: T) -> T {
        let (base, slope) = self.affine_scalar(t, y);
        base + slope * a
    }

    /// One-dimensional drift as `base + slope · a`. Every preset is affine in
    /// the control.
    #[inline]
    pub fn affine_scalar(&self, _t: T, y: T) -> (T, T) {
        match self {
            Drift::Constant { mu } => (mu[0], T::zero()),
            Drift::Affine { mu, gain } => (mu[0], gain[0]),
            Drift::MeanReverting { kappa, mean, gain } => (*kappa * (mean[0] - y), gain[0]),
        }
    }
}

/// Terminal cost presets, applied to the first state coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Terminal<T> {
    Constant { c: T },
    /// `slope · y + intercept`; unbounded.
    Linear { slope: T, intercept: T },
    /// `clamp(slope · y, lo, hi)`.
    ClampedLinear { slope: T, lo: T, hi: T },
    /// `amplitude · tanh(scale · y)`.
    Tanh { scale: T, amplitude: T },
    /// `coeff · y²`; unbounded.
    Quadratic { coeff: T },
}

impl<T: Scalar> Terminal<T> {
    #[inline]
    pub fn eval(&self, y: T) -> T {
        match *self {
            Terminal::Constant { c } => c,
            Terminal::Linear { slope, intercept } => slope * y + intercept,
            Terminal::ClampedLinear { slope, lo, hi } => (slope * y).max(lo).min(hi),
            Terminal::Tanh { scale, amplitude } => amplitude * (scale * y).tanh(),
            Terminal::Quadratic { coeff } => coeff * y * y,
        }
    }

    /// Bounded on all of `ℝ`.
    pub fn is_bounded(&self) -> bool {
        match *self {
            Terminal::Constant { .. } | Terminal::ClampedLinear { .. } | Terminal::Tanh { .. } => true,
            Terminal::Linear { slope, .. } => slope == T::zero(),
            Terminal::Quadratic { coeff } => coeff == T::zero(),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Terminal::Constant { c } => format!("constant({c})"),
            Terminal::Linear { slope, intercept } => format!("linear({slope}, {intercept})"),
            Terminal::ClampedLinear { slope, lo, hi } => format!("clamped_linear({slope}, [{lo}, {hi}])"),
            Terminal::Tanh { scale, amplitude } => format!("tanh({scale}, {amplitude})"),
            Terminal::Quadratic { coeff } => format!("quadratic({coeff})"),
        }
    }
}

/// Axis-aligned box in `ℝ^m`; `lo == hi` on an axis makes it a singleton.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Scalar> ControlBox<T> {
    pub fn interval(lo: T, hi: T) -> Self {
        Self { lo: vec![lo], hi: vec![hi] }
    }

    pub fn singleton(a: T) -> Self {
        Self::interval(a, a)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, a: &[T]) -> bool {
        a.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&x, (&lo, &hi))| x >= lo && x <= hi)
    }
}

#[derive(Debug, Clone)]
pub struct ControlProblem<T> {
    pub drift: Drift<T>,
    /// `d × d`, row-major.
    pub sigma: Vec<T>,
    pub control_box: ControlBox<T>,
    pub terminal: Terminal<T>,
    pub horizon: T,
    /// Per-coordinate truncation of the state space.
    pub y_box: Vec<(T, T)>,
    pub z_box: (T, T),
}

/// Empirical constants of the drift bounds `|b| ≤ c1 (1 + |a|)` and
/// `|b(t,y1,a) - b(s,y2,a)| ≤ c2 (|t-s| + |y1-y2|)` over sampled arguments.
#[derive(Debug, Clone, Serialize)]
pub struct DriftCheck {
    pub growth_c1: f64,
    pub lipschitz_c2: f64,
    pub terminal_sup: f64,
    pub terminal_globally_bounded: bool,
}

impl<T: Scalar> ControlProblem<T> {
    /// One-dimensional problem with unit-free defaults for the boxes.
    pub fn scalar(drift: Drift<T>, sigma: T, control_box: ControlBox<T>, terminal: Terminal<T>, horizon: T) -> Self {
        Self {
            drift,
            sigma: vec![sigma],
            control_box,
            terminal,
            horizon,
            y_box: vec![(lit(-8.0), lit(8.0))],
            z_box: (lit(0.05), lit(8.0)),
        }
    }

    pub fn with_y_box(mut self, lo: T, hi: T) -> Self {
        self.y_box = vec![(lo, hi)];
        self
    }

    pub fn with_z_box(mut self, lo: T, hi: T) -> Self {
        self.z_box = (lo, hi);
        self
    }

    /// Uses the conjugate domain of `spec` as the z-box when it is compact.
    pub fn with_z_box_for(self, spec: &LossSpec<T>) -> Self {
        let dom = spec.conj_domain();
        match dom.hi {
            Some(hi) => self.with_z_box(dom.lo, hi),
            None => self,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.y_box.len()
    }

    /// Structural checks shared by every solver.
    pub fn validate(&self) -> Result<()> {
        let d = self.state_dim();
        if d == 0 {
            return Err(invalid("y_box", "empty state space"));
        }
        if self.sigma.len() != d * d {
            return Err(invalid("sigma", format!("expected {} entries, got {}", d * d, self.sigma.len())));
        }
        if self.drift.state_dim() != d {
            return Err(invalid("drift", "dimension does not match y_box"));
        }
        let m = self.control_box.dim();
        if m == 0 || self.control_box.hi.len() != m {
            return Err(invalid("control_box", "malformed bounds"));
        }
        if self.control_box.lo.iter().zip(&self.control_box.hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(invalid("control_box", "need finite lo <= hi on every axis"));
        }
        match &self.drift {
            Drift::Affine { gain, .. } | Drift::MeanReverting { gain, .. } if gain.len() != d * m => {
                return Err(invalid("drift", "gain matrix shape does not match state and control dimensions"));
            }
            _ => {}
        }
        if !(self.horizon > T::zero() && self.horizon.is_finite()) {
            return Err(invalid("horizon", "must be positive and finite"));
        }
        if self.y_box.iter().any(|&(lo, hi)| !(lo < hi && lo.is_finite() && hi.is_finite())) {
            return Err(invalid("y_box", "need finite lo < hi"));
        }
        if self.sigma.iter().any(|s| !s.is_finite()) {
            return Err(invalid("sigma", "non-finite entry"));
        }
        Ok(())
    }

    /// Checks that the z-box sits in the conjugate domain: inside its interior
    /// except for edges that coincide with the domain boundary.
    pub fn validate_z_box(&self, spec: &LossSpec<T>) -> Result<()> {
        let (lo, hi) = self.z_box;
        let dom = spec.conj_domain();
        if !(lo < hi) {
            return Err(invalid("z_box", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        let lo_ok = dom.interior_contains(lo) || lo == dom.lo;
        let hi_ok = dom.interior_contains(hi) || dom.hi == Some(hi);
        if !(lo_ok && hi_ok) {
            let dhi = dom.hi.map_or("inf".to_string(), |h| h.to_string());
            return Err(invalid(
                "z_box",
                format!("[{lo}, {hi}] not inside the conjugate domain [{}, {dhi}] of `{}`", dom.lo, spec.name()),
            ));
        }
        Ok(())
    }

    /// The one-dimensional pieces the PDE solvers need.
    pub(crate) fn scalar_parts(&self) -> Result<(T, (T, T), (T, T))> {
        self.validate()?;
        if self.state_dim() != 1 || self.control_box.dim() != 1 {
            return Err(invalid("problem", "PDE solvers support one state and one control dimension"));
        }
        let sigma = self.sigma[0];
        if !(sigma > T::zero()) {
            return Err(invalid("sigma", "PDE solvers need sigma > 0"));
        }
        Ok((sigma, self.y_box[0], (self.control_box.lo[0], self.control_box.hi[0])))
    }

    /// Spot-checks the drift growth and Lipschitz bounds on a sample lattice
    /// of the computational box, and the size of `f` on the y-box.
    pub fn check_drift(&self, samples: usize) -> Result<DriftCheck> {
        self.validate()?;
        let d = self.state_dim();
        let m = self.control_box.dim();
        let samples = samples.max(2);
        let frac = |i: usize| lit::<T>(i as f64) / lit((samples - 1) as f64);
        let mut c1 = T::zero();
        let mut c2 = T::zero();
        let mut b1 = vec![T::zero(); d];
        let mut b2 = vec![T::zero(); d];
        let mut f_sup = T::zero();
        for i in 0..samples {
            let t = self.horizon * frac(i);
            let s = self.horizon * frac(samples - 1 - i);
            let y: Vec<T> = self.y_box.iter().map(|&(lo, hi)| lo + (hi - lo) * frac(i)).collect();
            let y2: Vec<T> = self.y_box.iter().map(|&(lo, hi)| lo + (hi - lo) * frac((i * 7 + 3) % samples)).collect();
            f_sup = f_sup.max(self.terminal.eval(y[0]).abs());
            for j in 0..samples {
                let a: Vec<T> = (0..m)
                    .map(|k| self.control_box.lo[k] + (self.control_box.hi[k] - self.control_box.lo[k]) * frac(j))
                    .collect();
                self.drift.eval(t, &y, &a, &mut b1);
                self.drift.eval(s, &y2, &a, &mut b2);
                let na = norm(&a);
                c1 = c1.max(norm(&b1) / (T::one() + na));
                let diff: Vec<T> = b1.iter().zip(&b2).map(|(&p, &q)| p - q).collect();
                let dy: Vec<T> = y.iter().zip(&y2).map(|(&p, &q)| p - q).collect();
                let denom = (t - s).abs() + norm(&dy);
                if denom > T::zero() {
                    c2 = c2.max(norm(&diff) / denom);
                }
            }
        }
        let bounded = self.terminal.is_bounded();
        if !bounded {
            warn!("terminal cost {} is not bounded on the whole line", self.terminal.describe());
        }
        Ok(DriftCheck {
            growth_c1: to_f64(c1),
            lipschitz_c2: to_f64(c2),
            terminal_sup: to_f64(f_sup),
            terminal_globally_bounded: bounded,
        })
    }
}

pub(crate) fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ControlProblem<f64> {
        ControlProblem::scalar(
            Drift::identity(),
            1.0,
            ControlBox::interval(-1.0, 1.0),
            Terminal::Tanh { scale: 1.0, amplitude: 1.0 },
            1.0,
        )
    }

    #[test]
    fn validates_shapes() {
        assert!(base().validate().is_ok());
        let mut p = base();
        p.sigma = vec![1.0, 0.0];
        assert!(p.validate().is_err());
        let mut p = base();
        p.horizon = 0.0;
        assert!(p.validate().is_err());
        let mut p = base();
        p.control_box = ControlBox::interval(1.0, -1.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn z_box_rules() {
        let avar = LossSpec::avar(0.5).unwrap();
        assert!(base().with_z_box(0.0, 2.0).validate_z_box(&avar).is_ok());
        let err = base().with_z_box(0.0, 3.0).validate_z_box(&avar).unwrap_err();
        assert!(err.to_string().contains("z_box"));
        let ent = LossSpec::entropic();
        assert!(base().validate_z_box(&ent).is_ok());
        assert!(base().with_z_box(-0.1, 2.0).validate_z_box(&ent).is_err());
    }

    #[test]
    fn drift_presets() {
        let b = Drift::Affine { mu: vec![0.5], gain: vec![2.0] };
        assert_eq!(b.eval_scalar(0.0, 3.0, 1.0), 2.5);
        let mr = Drift::MeanReverting { kappa: 2.0, mean: vec![1.0], gain: vec![1.0] };
        let mut out = [0.0];
        mr.eval(0.0, &[3.0], &[0.5], &mut out);
        assert_eq!(out[0], -3.5);
        assert_eq!(mr.eval_scalar(0.0, 3.0, 0.5), -3.5);
        let two_d = Drift::Affine { mu: vec![0.0, 1.0], gain: vec![1.0, 0.0, 0.0, 2.0] };
        let mut out = [0.0; 2];
        two_d.eval(0.0, &[0.0, 0.0], &[1.0, 1.0], &mut out);
        assert_eq!(out, [1.0, 3.0]);
    }

    #[test]
    fn drift_bounds_spot_check() {
        let check = base().check_drift(21).unwrap();
        assert!((check.growth_c1 - 0.5).abs() < 1e-12);
        assert_eq!(check.lipschitz_c2, 0.0);
        assert!(check.terminal_globally_bounded);
        let mr = ControlProblem::scalar(
            Drift::MeanReverting { kappa: 0.7, mean: vec![0.0], gain: vec![1.0] },
            1.0,
            ControlBox::interval(-1.0, 1.0),
            Terminal::Quadratic { coeff: 1.0 },
            1.0,
        );
        let check = mr.check_drift(21).unwrap();
        assert!(check.lipschitz_c2 <= 0.7 + 1e-12 && check.lipschitz_c2 > 0.0);
        assert!(!check.terminal_globally_bounded);
    }
}
