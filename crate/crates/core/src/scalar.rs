//! The scalar abstraction the numerical core is generic over.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Real floating-point scalar: implemented for `f32` and `f64`.
///
/// Everything that touches special functions (gamma, Student-t and normal
/// quantiles) or random number generation goes through `f64` and converts
/// back, so lower-precision scalars only lose precision in those spots.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("constant representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn finite(self) -> bool {
        self.as_f64().is_finite()
    }

    #[inline]
    fn to_rad(self) -> Self {
        self * Self::pi() / Self::lit(180.0)
    }

    /// Square root of machine epsilon; used as the default relative tolerance
    /// for rank and singularity decisions.
    #[inline]
    fn sqrt_eps() -> Self {
        Self::default_epsilon().sqrt()
    }
}

impl Real for f32 {}
impl Real for f64 {}
