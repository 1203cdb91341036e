//! Scalar abstraction for the numeric core.
//!
//! Everything in [`crate::surrogates`] and [`crate::smbo`] is written against
//! [`Real`] so the same code runs on `f32` and `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar usable by the models and the optimizer.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lift an `f64` constant into the scalar type.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    /// Lower to `f64` (for special functions and reporting).
    fn to64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Debug
        + Display
        + Default
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

/// Standard normal density.
pub fn norm_pdf<F: Real>(z: F) -> F {
    let z = z.to64();
    F::of((-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt())
}

/// Standard normal cumulative distribution function.
pub fn norm_cdf<F: Real>(z: F) -> F {
    let z = z.to64();
    F::of(0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2))
}
