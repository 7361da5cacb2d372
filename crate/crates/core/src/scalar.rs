//! Scalar abstraction for heatmap storage.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating-point scalar for heatmap grids: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Debug + Default + Send + Sync + 'static
{
    /// Widens to `f64`; lossless for the two implementors.
    fn as_f64(self) -> f64;

    /// Narrows from `f64`, rounding to the nearest representable value.
    fn from_f64_lossy(v: f64) -> Self;
}

impl Scalar for f32 {
    fn as_f64(self) -> f64 {
        self.into()
    }

    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    fn as_f64(self) -> f64 {
        self
    }

    fn from_f64_lossy(v: f64) -> Self {
        v
    }
}
