//! Scalar abstraction: every numeric kernel in this crate is generic over [`Real`],
//! instantiated as `f32` or `f64` (the pipeline uses `f64`, see [`crate::Scalar`]).

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar usable by the math kernels.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum<Self>
    + for<'a> Sum<&'a Self>
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy cast from an `f64` constant. Panics on values not representable
    /// at all (never the case for the literals used in this crate).
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable")
    }

    /// Widen to `f64` for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite scalar widens to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Mean of a slice; zero for an empty slice.
pub fn mean<F: Real>(xs: &[F]) -> F {
    if xs.is_empty() {
        return F::zero();
    }
    xs.iter().copied().sum::<F>() / F::cast(xs.len() as f64)
}

/// Population standard deviation (divides by `n`).
pub fn std_dev<F: Real>(xs: &[F]) -> F {
    if xs.is_empty() {
        return F::zero();
    }
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<F>() / F::cast(xs.len() as f64);
    var.sqrt()
}
