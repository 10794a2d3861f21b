//! Extended reals `ℝ ∪ {+∞}` for convex conjugates.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal<T> {
    Finite(T),
    PosInf,
}

impl<T: Scalar> ExtReal<T> {
    pub fn from_scalar(x: T) -> Self {
        if x == T::infinity() {
            ExtReal::PosInf
        } else {
            ExtReal::Finite(x)
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<T> {
        match self {
            ExtReal::Finite(x) => Some(x),
            ExtReal::PosInf => None,
        }
    }

    /// Maps `+∞` to the scalar infinity.
    pub fn to_scalar(self) -> T {
        match self {
            ExtReal::Finite(x) => x,
            ExtReal::PosInf => T::infinity(),
        }
    }

    /// Saturating addition: anything plus `+∞` is `+∞`.
    pub fn add(self, other: Self) -> Self {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInf,
        }
    }

    pub fn add_finite(self, x: T) -> Self {
        self.add(ExtReal::Finite(x))
    }

    /// `self - other`; `∞ - ∞` and `finite - ∞` have no value in `ℝ ∪ {+∞}`.
    pub fn sub(self, other: Self) -> Result<Self> {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => Ok(ExtReal::Finite(a - b)),
            (ExtReal::PosInf, ExtReal::Finite(_)) => Ok(ExtReal::PosInf),
            (ExtReal::PosInf, ExtReal::PosInf) => Err(Error::UndefinedArithmetic("inf - inf")),
            (ExtReal::Finite(_), ExtReal::PosInf) => Err(Error::UndefinedArithmetic("finite - inf")),
        }
    }

    /// Nonnegative scaling; `0 · ∞` is an error.
    pub fn scale(self, c: T) -> Result<Self> {
        if c < T::zero() {
            return Err(Error::UndefinedArithmetic("negative scaling of extended real"));
        }
        match self {
            ExtReal::Finite(a) => Ok(ExtReal::Finite(a * c)),
            ExtReal::PosInf if c == T::zero() => Err(Error::UndefinedArithmetic("0 * inf")),
            ExtReal::PosInf => Ok(ExtReal::PosInf),
        }
    }
}

impl<T: Scalar> PartialOrd for ExtReal<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b),
            (ExtReal::Finite(_), ExtReal::PosInf) => Some(Ordering::Less),
            (ExtReal::PosInf, ExtReal::Finite(_)) => Some(Ordering::Greater),
            (ExtReal::PosInf, ExtReal::PosInf) => Some(Ordering::Equal),
        }
    }
}
