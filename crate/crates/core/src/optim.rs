//! Scalar search routines: golden-section search and bracket expansion for
//! convex one-dimensional objectives.

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimizes a unimodal `f` on `[a, b]` to an interval of width `tol`.
/// Returns `(argmin, min)`.
pub fn golden_min<T: Scalar>(f: impl Fn(T) -> T, mut a: T, mut b: T, tol: T) -> (T, T) {
    let r: T = lit(INV_PHI);
    let mut c = b - (b - a) * r;
    let mut d = a + (b - a) * r;
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iters = 0;
    while (b - a).abs() > tol && iters < 400 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * r;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * r;
            fd = f(d);
        }
        iters += 1;
    }
    // the end points may beat the interior probes on flat or kinked objectives
    let candidates = [(c, fc), (d, fd), (a, f(a)), (b, f(b))];
    candidates
        .into_iter()
        .fold((c, fc), |best, cand| if cand.1 < best.1 { cand } else { best })
}

/// Maximizes a unimodal `f` on `[a, b]`. Returns `(argmax, max)`.
pub fn golden_max<T: Scalar>(f: impl Fn(T) -> T, a: T, b: T, tol: T) -> (T, T) {
    let (x, v) = golden_min(|x| -f(x), a, b, tol);
    (x, -v)
}

/// Result of [`minimize_convex`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMin<T> {
    pub arg: T,
    pub value: T,
    /// Bracket expansions plus golden-section iterations.
    pub iterations: usize,
}

/// Maximum number of geometric bracket expansions in [`minimize_convex`].
pub const MAX_BRACKET_DOUBLINGS: usize = 60;

/// Minimizes a convex `f` starting from the bracket `[lo, hi]`, doubling the
/// bracket width towards the descent side until the midpoint value is no
/// larger than both end values, then refining by golden section to `tol`.
pub fn minimize_convex<T: Scalar>(f: impl Fn(T) -> T, mut lo: T, mut hi: T, tol: T) -> Result<ScalarMin<T>> {
    let mut expansions = 0;
    loop {
        let mid = (lo + hi) * lit(0.5);
        let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
        if !(flo.is_finite() || fhi.is_finite()) && !fmid.is_finite() {
            return Err(Error::NoConvergence("objective not finite on the bracket".into()));
        }
        if fmid <= flo && fmid <= fhi {
            break;
        }
        if expansions == MAX_BRACKET_DOUBLINGS {
            return Err(Error::NoConvergence(format!(
                "minimum not bracketed after {MAX_BRACKET_DOUBLINGS} doublings"
            )));
        }
        let width = hi - lo;
        if flo < fmid {
            lo = lo - width;
        } else {
            hi = hi + width;
        }
        expansions += 1;
    }
    let golden_iters = ((hi - lo) / tol).max(T::one()).ln() / lit::<T>(INV_PHI).recip().ln();
    let (arg, value) = golden_min(&f, lo, hi, tol);
    Ok(ScalarMin {
        arg,
        value,
        iterations: expansions + golden_iters.ceil().to_usize().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_on_parabola() {
        let (x, v) = golden_min(|x: f64| (x - 1.3).powi(2) + 2.0, -5.0, 5.0, 1e-10);
        assert!((x - 1.3).abs() < 1e-7);
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn golden_on_kink_at_end() {
        let (x, v) = golden_min(|x: f64| x.abs(), 0.0, 3.0, 1e-12);
        assert_eq!((x, v), (0.0, 0.0));
    }

    #[test]
    fn bracket_expands_to_far_minimum() {
        let m = minimize_convex(|x: f64| (x - 1000.0).abs(), -1.0, 1.0, 1e-10).unwrap();
        assert!((m.arg - 1000.0).abs() < 1e-8);
        let m = minimize_convex(|x: f64| (x + 77.0).powi(2), -1.0, 1.0, 1e-10).unwrap();
        assert!((m.arg + 77.0).abs() < 1e-6);
    }

    #[test]
    fn unbounded_below_fails() {
        assert!(matches!(minimize_convex(|x: f64| x, -1.0, 1.0, 1e-10), Err(Error::NoConvergence(_))));
    }
}
