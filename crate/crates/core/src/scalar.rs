//! Scalar abstractions.
//!
//! Score, loss and map arithmetic is written against [`Real`] so it runs in
//! `f32` or `f64`. Confusion-table metrics only need field operations and are
//! written against [`Quantity`], which additionally admits exact rationals.

use std::fmt::{Debug, Display};

use num_rational::{BigRational, Ratio};
use num_traits::{Float, FromPrimitive, Num, NumAssign};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + NumAssign + std::iter::Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count fits the scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("real scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Construction from a non-negative integer count.
pub trait FromCount {
    fn from_count(n: u64) -> Self;
}

impl FromCount for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }
}

impl FromCount for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }
}

impl FromCount for Ratio<i64> {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(i64::try_from(n).expect("count fits i64"))
    }
}

impl FromCount for Ratio<i128> {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(i128::from(n))
    }
}

impl FromCount for BigRational {
    fn from_count(n: u64) -> Self {
        BigRational::from_integer(n.into())
    }
}

/// Field-like scalar for ratios of counts; exact when instantiated with a
/// rational type.
pub trait Quantity: Num + Clone + PartialOrd + FromCount + Debug {}

impl<T> Quantity for T where T: Num + Clone + PartialOrd + FromCount + Debug {}

/// Neumaier-compensated sum in iteration order.
pub fn compensated_sum<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut carry = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Mean and population standard deviation, two-pass with compensated sums.
/// Returns `None` for an empty input.
pub fn mean_std<T: Real>(values: &[T]) -> Option<(T, T)> {
    if values.is_empty() {
        return None;
    }
    let n = T::from_usize_lossy(values.len());
    let mean = compensated_sum(values.iter().copied()) / n;
    let var = compensated_sum(values.iter().map(|&v| (v - mean) * (v - mean))) / n;
    Some((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let v = [1e16_f64, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn mean_std_of_two_point_set() {
        let (m, s) = mean_std(&[0.0_f64, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!((m, s), (0.5, 0.5));
        assert!(mean_std::<f32>(&[]).is_none());
    }
}
