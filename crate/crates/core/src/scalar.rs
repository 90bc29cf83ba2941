use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the geometry, field and renderer are generic over.
///
/// Implemented for `f32` (the production precision) and `f64` (used by
/// gradient checks and reference computations).
pub trait Real:
    Float
    + FromPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from a literal.
    fn lit(v: f64) -> Self;

    fn as_f32(self) -> f32;

    fn to_f64_lossless(self) -> f64;

    fn of_f32(v: f32) -> Self;
}

impl Real for f32 {
    #[inline(always)]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline(always)]
    fn as_f32(self) -> f32 {
        self
    }

    #[inline(always)]
    fn to_f64_lossless(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn of_f32(v: f32) -> Self {
        v
    }
}

impl Real for f64 {
    #[inline(always)]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline(always)]
    fn as_f32(self) -> f32 {
        self as f32
    }

    #[inline(always)]
    fn to_f64_lossless(self) -> f64 {
        self
    }

    #[inline(always)]
    fn of_f32(v: f32) -> Self {
        v as f64
    }
}
