//! Scalar abstraction shared by the geometry and network code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point type the numeric core is generic over.
///
/// Implemented for `f32` and `f64`. The pipeline (simulation, DIA
/// extraction, datasets) runs in `f64`; networks and reference paths can be
/// instantiated at either precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the value is unrepresentable,
    /// which cannot happen for finite inputs and the two implementors.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn pi() -> Self {
        Self::lit(std::f64::consts::PI)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Scalar>(angle: T) -> T {
    let two_pi = T::pi() + T::pi();
    let mut a = angle % two_pi;
    if a <= -T::pi() {
        a += two_pi;
    } else if a > T::pi() {
        a -= two_pi;
    }
    a
}
