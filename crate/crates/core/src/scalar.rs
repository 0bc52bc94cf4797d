//! Generic floating point scalar used throughout the crate.

use nalgebra as na;
use num_traits as nt;

/// Real scalar the geometry is generic over (`f32` or `f64`).
///
/// Math methods come from [`na::RealField`]; conversions from `num-traits`.
pub trait Real:
    na::RealField
    + Copy
    + nt::FromPrimitive
    + nt::ToPrimitive
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon.
    const EPS: Self;

    /// Converts an `f64` literal. Total for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(x).expect("f64 literal fits in scalar")
    }

    #[inline]
    fn from_usize_lossy(x: usize) -> Self {
        Self::lit(x as f64)
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    const EPS: Self = f32::EPSILON;
}

impl Real for f64 {
    const EPS: Self = f64::EPSILON;
}

/// Shorthand for `T::lit`.
#[inline]
pub fn c<T: Real>(x: f64) -> T {
    T::lit(x)
}
