//! Floating-point scalar abstraction shared by the differentiation engine,
//! the model and the optimizer.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar usable as the element type of [`crate::Tensor`].
///
/// Implemented for `f32` and `f64`. Checkpoints and analytics always go
/// through `f64`, so the conversions below must be exact for `f32 -> f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Short name recorded in checkpoint headers.
    const NAME: &'static str;

    /// Converts an `f64` constant (rounding for `f32`).
    fn lit(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

/// Numerically stable logistic function, branching on sign so `exp` never
/// overflows.
#[inline]
pub fn stable_sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
