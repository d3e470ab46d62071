use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar the whole library is generic over.
///
/// Implemented for `f32` and `f64`. The geometric routines use trigonometry and
/// square roots, so exact rational types are not supported.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for constants and sampled values.
    #[inline]
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 is representable in every Scalar")
    }

    /// Conversion from a count.
    #[inline]
    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("usize is representable in every Scalar")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense vector helpers over slices. Every strategy works on these.
pub mod vec {
    use super::Scalar;

    #[inline]
    pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
    }

    #[inline]
    pub fn norm<T: Scalar>(a: &[T]) -> T {
        dot(a, a).sqrt()
    }

    #[inline]
    pub fn is_zero<T: Scalar>(a: &[T]) -> bool {
        a.iter().all(|x| x.is_zero())
    }

    /// `a * x + b * y`, elementwise.
    pub fn lin_comb<T: Scalar>(a: T, x: &[T], b: T, y: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), y.len());
        x.iter().zip(y).map(|(&xi, &yi)| a * xi + b * yi).collect()
    }

    /// `y += a * x`
    pub fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), y.len());
        for (yi, &xi) in y.iter_mut().zip(x) {
            *yi = *yi + a * xi;
        }
    }

    pub fn scale<T: Scalar>(a: T, x: &[T]) -> Vec<T> {
        x.iter().map(|&v| a * v).collect()
    }

    /// Angle in `[0, π]` between two nonzero vectors.
    ///
    /// Uses `atan2(‖b⊥‖, a·b)` with `b⊥` the component of `b` orthogonal to
    /// `a`; unlike `acos` this keeps full precision near 0 and π and cannot
    /// leave the valid range. Returns `None` if either vector is zero.
    pub fn angle<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
        let na = norm(a);
        let nb = norm(b);
        if na.is_zero() || nb.is_zero() {
            return None;
        }
        let d = dot(a, b);
        let along = d / (na * na);
        let perp = a
            .iter()
            .zip(b)
            .map(|(&ai, &bi)| {
                let r = bi - along * ai;
                r * r
            })
            .sum::<T>()
            .sqrt();
        Some(perp.atan2(d / na))
    }

    pub fn all_finite<T: Scalar>(a: &[T]) -> bool {
        a.iter().all(|x| x.is_finite())
    }
}
