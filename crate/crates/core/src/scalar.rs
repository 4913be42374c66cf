//! Floating-point scalar abstraction: the numerical core is generic over the
//! scalar type; `f32` and `f64` are the supported instantiations.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type for all numerics: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + std::fmt::Debug + std::fmt::Display + Default + Send + Sync + 'static
{
    /// Shorthand for lossy conversion from an `f64` literal.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an `f64` constant into the scalar type (panics only for NaN-free
/// literals on exotic types, never for f32/f64).
#[inline]
pub fn c<S: Scalar>(x: f64) -> S {
    S::c(x)
}
