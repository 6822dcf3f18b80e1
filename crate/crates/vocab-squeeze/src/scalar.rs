//! Scalar abstraction: every probability/information quantity in this crate is
//! generic over a floating-point type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used for probabilities and information values
/// (f32 or f64; counts always stay in exact `u64` arithmetic).
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an integer count.
    fn from_count(c: u64) -> Self {
        Self::from_u64(c).expect("count representable as float")
    }

    /// Lossy conversion to f64 for reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
}
