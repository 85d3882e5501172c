//! Scalar abstraction so the solver core runs on f32 or f64.
//!
//! All tolerances in the library are expressed relative to quantities of the
//! problem, so an f32 instantiation degrades gracefully; the test suite and the
//! benchmark CLI pin f64.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FromPrimitive, NumAssign};

pub trait Real:
    'static + Send + Sync + Float + NumAssign + FromPrimitive + Default + Debug + Display + LowerExp
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for typed literals: `real::<T>(0.25)`.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}
