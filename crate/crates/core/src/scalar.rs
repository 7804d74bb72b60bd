//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All solvers, link formulas and image metrics are written against
//! [`Scalar`], which is implemented for `f32` and `f64`. The crate root
//! re-exports `f64` aliases as the default working precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal not representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `2^x − 1` without cancellation for small `x`.
#[inline]
pub(crate) fn exp2_m1<T: Scalar>(x: T) -> T {
    (x * T::LN_2()).exp_m1()
}

#[inline]
pub(crate) fn clamp01<T: Scalar>(x: T) -> T {
    x.max(T::zero()).min(T::one())
}
