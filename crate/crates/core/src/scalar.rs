//! Floating-point abstraction shared by the performance and cost arithmetic.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used by [`crate::perfmodel`] and [`crate::costmodel`].
///
/// Implemented for `f32` and `f64`. Literals go through [`Scalar::lit`] so
/// generic code can write constants like `T::lit(24.0)`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Round half away from zero to two decimals, the presentation rule for
/// every currency value that leaves the library in a report.
pub fn round_currency<T: Scalar>(value: T) -> T {
    let hundred = T::lit(100.0);
    (value * hundred).round() / hundred
}
