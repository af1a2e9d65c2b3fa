//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt;

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point scalar the state algebra is generic over (`f32` or `f64`).
///
/// Tolerances throughout the crate are written for `f64`; [`Real::scaled_tol`]
/// widens them in proportion to the machine epsilon of the concrete type.
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + FloatConst
    + Default
    + fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon, as an `f64`.
    const EPSILON: f64;
    /// Smallest positive normal value, as an `f64`.
    const MIN_POSITIVE: f64;

    /// Converts an `f64` constant into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("literal representable")
    }

    /// `max(x, MIN_POSITIVE)` converted to `Self`; never rounds to zero.
    #[inline]
    fn positive_floor(x: f64) -> Self {
        Self::lit(x.max(Self::MIN_POSITIVE))
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// An `f64` tolerance rescaled to the precision of `Self`.
    #[inline]
    fn scaled_tol(tol: f64) -> Self {
        Self::lit(tol * (Self::EPSILON / f64::EPSILON))
    }
}

impl Real for f32 {
    const EPSILON: f64 = f32::EPSILON as f64;
    const MIN_POSITIVE: f64 = f32::MIN_POSITIVE as f64;
}

impl Real for f64 {
    const EPSILON: f64 = f64::EPSILON;
    const MIN_POSITIVE: f64 = f64::MIN_POSITIVE;
}
