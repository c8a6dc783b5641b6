//! Scalar abstraction for the numeric kernels.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the DSP and inference kernels are written against.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts a slice between scalar types.
pub fn cast_slice<S: Scalar, T: Scalar>(xs: &[S]) -> Vec<T> {
    xs.iter().map(|&x| T::of(x.as_f64())).collect()
}
