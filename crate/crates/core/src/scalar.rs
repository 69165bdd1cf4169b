//! Scalar abstraction so the solver stack works in `f32` or `f64`.

use std::fmt;

use num_traits::{Float, FloatConst, NumAssign};

/// Floating-point scalar used throughout the crate.
///
/// Implemented for `f32` and `f64`. Double precision is what the shipped
/// tolerances are calibrated for; single precision is supported for
/// memory-bound experimentation.
pub trait Scalar:
    Float + FloatConst + NumAssign + fmt::Display + fmt::Debug + fmt::LowerExp + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `max(floor, a few ulps)` — lets a tolerance written for `f64`
    /// degrade gracefully when the scalar is `f32`.
    fn adaptive_tol(floor: f64) -> Self {
        Self::from_f64(floor).max(Self::epsilon() * Self::from_f64(100.0))
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}
