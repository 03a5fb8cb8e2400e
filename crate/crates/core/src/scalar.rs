// SPDX-License-Identifier: Apache-2.0

//! Floating point abstraction used by the numeric kernels (f32 or f64).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast};

pub trait Scalar:
    Float + FromPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
