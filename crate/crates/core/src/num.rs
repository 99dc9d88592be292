//! Scalar abstraction: every model computation is generic over [`Real`].

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar (f32 or f64) with the conversions and in-place
/// arithmetic the trainers need.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Lossy cast from an f64 constant. Panics only on NaN-producing casts,
    /// which cannot happen for the finite literals used in this crate.
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant")
    }

    fn cast_usize(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(|| Self::cast(n as f64))
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum<T>
        + Display
        + Debug
        + Send
        + Sync
        + 'static
{
}
