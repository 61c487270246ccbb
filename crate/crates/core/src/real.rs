//! Floating-point abstraction so every kernel runs in f32 (training) or
//! f64 (gradient checking) from a single implementation.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

pub trait Real:
    Float + NumAssign + ScalarOperand + LinalgScalar + Sum + Send + Sync + Debug + Display + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn from_f32(x: f32) -> Self;
    fn as_f32(self) -> f32;
}

impl Real for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f32(x: f32) -> Self {
        x
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f32(x: f32) -> Self {
        x as f64
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self as f32
    }
}

/// Shorthand for converting a literal into the active float type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x)
}
