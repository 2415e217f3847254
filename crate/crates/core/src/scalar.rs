//! Floating-point scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type the library is generic over: `f32` or `f64`.
///
/// Tolerances quoted throughout the crate (`1e-10`, `1e-12`, ...) are tuned for
/// `f64`; the `f32` instantiation works with correspondingly looser tolerances.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Conversion from a count or index.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Conversion from a lattice site index.
    fn from_site(n: i64) -> Self {
        Self::from_i64(n).expect("site representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Positive part `max(x, 0)`.
#[inline]
pub fn pos_part<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Negative part `max(-x, 0)`.
#[inline]
pub fn neg_part<T: Scalar>(x: T) -> T {
    if x < T::zero() {
        -x
    } else {
        T::zero()
    }
}

/// Unit in the last place of `x` (spacing to the next representable value in magnitude).
pub fn ulp<T: Scalar>(x: T) -> T {
    let ax = x.abs();
    if ax == T::zero() {
        return T::min_positive_value();
    }
    // eps is the spacing at 1.0; scale by the binade of |x|.
    let e = ax.log2().floor();
    T::epsilon() * T::lit(2.0).powf(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parts_split_sign() {
        assert_eq!(pos_part(-0.2f64), 0.0);
        assert_eq!(neg_part(-0.2f64), 0.2);
        assert_eq!(pos_part(1.5f32), 1.5);
        assert_eq!(neg_part(1.5f32), 0.0);
    }

    #[test]
    fn ulp_matches_next_representable() {
        for &x in &[1.0f64, 0.3, 0.5, 3.75, 1e-7, 123456.0] {
            let next = f64::from_bits(x.to_bits() + 1);
            assert_eq!(ulp(x), next - x, "x = {x}");
        }
    }
}
