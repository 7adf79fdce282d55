//! Scalar abstraction for the numeric kernels.
//!
//! Everything in this crate is generic over a floating-point scalar so the
//! same code runs in f64 (the precision used throughout the test suite) and
//! f32 (useful at runtime when memory is tight). The crate root exposes
//! concrete aliases for the common container types.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable by every kernel in this crate.
///
/// Implemented by `f32` and `f64`. The bound set is the union of what the
/// sparse kernels (arithmetic, comparisons), the serializers (formatting) and
/// the parallel kernels (`Send + Sync`) need.
pub trait Scalar:
    Float + NumAssign + Sum + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static
{
    /// Conversion from f64, rounding when the scalar is narrower.
    ///
    /// RNG streams are always drawn in f64 and narrowed with this, so a
    /// fixed seed produces the same sequence of values regardless of the
    /// scalar type.
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 converts to any float scalar")
    }
}

impl<T> Scalar for T where
    T: Float
        + NumAssign
        + Sum
        + FromPrimitive
        + ToPrimitive
        + Display
        + Debug
        + Send
        + Sync
        + 'static
{
}
