//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by the estimation core.
///
/// Implemented for `f32` and `f64`. The transcendental functions come from
/// [`RealField`] so the same bound drives nalgebra's factorizations.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + std::fmt::Display + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion to `f64`, used for diagnostics and reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }

    /// `ln(1 + exp(x))` without overflow.
    #[inline]
    fn softplus(self) -> Self {
        let zero = Self::zero();
        let abs = self.abs();
        self.max(zero) + (-abs).exp().ln_1p()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
