//! Scalar abstraction shared by every numerical routine in the crate.

use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::FromPrimitive;

/// Real floating-point element type (`f32` or `f64`).
///
/// Everything numerical in this crate is written against this trait. The
/// concrete aliases at the crate root pin it to `f64`, which is the width all
/// documented tolerances refer to.
pub trait Scalar: NdFloat + FromPrimitive + Sum + Default {
    /// Lossy conversion from an `f64` literal or configuration value.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

pub(crate) fn norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

pub(crate) fn all_finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}
