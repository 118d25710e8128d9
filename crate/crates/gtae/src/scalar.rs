//! Scalar abstraction for the numeric core.
//!
//! All model, projection, regression and clustering math is generic over
//! [`Real`], so the same kernels run in `f32` or `f64`. File formats and the
//! pipeline pin `f64`; see the type aliases at the crate root.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used by the numeric core: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` constant into this scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in Real type")
    }

    /// Lossy view as `f64`, for reporting and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real value representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
