//! Scalar abstraction: every numeric routine in this crate is generic over
//! [`Real`], with `f64` as the default precision (see the aliases in the
//! crate root).

use num_traits::NumCast;

/// Floating-point scalar usable throughout the crate: `f32` or `f64`.
///
/// `RealField` supplies the transcendental and linear-algebra operations,
/// `NumCast` the conversions from `f64` literals and counts.
pub trait Real:
    nalgebra::RealField
    + NumCast
    + Copy
    + std::iter::Sum<Self>
    + serde::Serialize
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` constant. Panics only for non-float targets, which
    /// cannot implement this trait.
    fn of_f64(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 constant representable")
    }

    /// Convert a count.
    fn of_usize(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("usize representable")
    }

    /// Lossy view as `f64`, for reporting and serialization.
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar convertible to f64")
    }

    fn infinity() -> Self {
        Self::of_f64(f64::INFINITY)
    }

    fn is_finite(self) -> bool {
        nalgebra::ComplexField::is_finite(&self)
    }
}

impl Real for f32 {}
impl Real for f64 {}
