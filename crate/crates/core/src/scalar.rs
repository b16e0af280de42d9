//! Scalar abstraction: the numeric element type of every tensor.
//!
//! All core math is written against [`Scalar`] so the same kernels run in
//! f32 or f64. The crate-root aliases pin f64 as the default, which is what
//! the gradient checks and the checkpoint format assume.

use std::fmt::{Debug, Display};

/// Floating-point element type: f32 or f64.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an f64 constant into the working scalar type.
#[inline]
pub fn cast<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 constant converts to scalar")
}

/// Converts a scalar back to f64 (exact for f64, widening for f32).
#[inline]
pub fn to_f64<S: Scalar>(x: S) -> f64 {
    x.to_f64().expect("scalar converts to f64")
}

/// Converts a usize count into the working scalar type.
#[inline]
pub fn cast_usize<S: Scalar>(n: usize) -> S {
    S::from_usize(n).expect("usize count converts to scalar")
}
