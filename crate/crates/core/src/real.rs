//! Scalar abstraction for the group law and path integrator.
//!
//! Everything in the algebra is polynomial, so the same code runs in plain
//! `f64` for Monte Carlo work and in [`DoubleF64`] (double-double, ~106 bit
//! mantissa) when residuals are measured in the homogeneous norm, which takes
//! j-th roots of layer-j coordinates and would otherwise amplify rounding.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Real:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    /// `num / den` rounded once in the target precision.
    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_f64(num as f64) / Self::from_f64(den as f64)
    }

    fn is_zero(self) -> bool {
        self == Self::zero()
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct DoubleF64 {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleF64 {
    pub const fn new(x: f64) -> Self {
        DoubleF64 { hi: x, lo: 0.0 }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }
}

impl Add for DoubleF64 {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let (t, f) = two_sum(self.lo, rhs.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DoubleF64 { hi, lo }
    }
}

impl Neg for DoubleF64 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        DoubleF64 {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleF64 {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul for DoubleF64 {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let e = e + (self.hi * rhs.lo + self.lo * rhs.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DoubleF64 { hi, lo }
    }
}

impl Div for DoubleF64 {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        // long division: two correction steps
        let q1 = self.hi / rhs.hi;
        let r = self - rhs * DoubleF64::new(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * DoubleF64::new(q2);
        let q3 = r.hi / rhs.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DoubleF64 { hi, lo } + DoubleF64::new(q3)
    }
}

impl AddAssign for DoubleF64 {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for DoubleF64 {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl MulAssign for DoubleF64 {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl Real for DoubleF64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        DoubleF64::new(x)
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Converts a coordinate vector between precisions.
pub fn convert<A: Real, B: Real>(v: &[A]) -> Vec<B> {
    v.iter().map(|x| B::from_f64(x.to_f64())).collect()
}

/// Exact difference `a - b` rounded to `f64` once, for residuals of
/// double-double vectors.
pub fn diff_f64<S: Real>(a: &[S], b: &[S]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (*x - *y).to_f64()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_double_division_keeps_low_word() {
        let third = DoubleF64::from_ratio(1, 3);
        let back = third * DoubleF64::new(3.0) - DoubleF64::new(1.0);
        assert!(back.to_f64().abs() < 1e-31, "{back:?}");
        assert!(third.lo() != 0.0);
    }

    #[test]
    fn double_double_recovers_cancellation() {
        let x = DoubleF64::new(0.1) * DoubleF64::new(0.1) - DoubleF64::new(0.01);
        let exact = 0.1f64.mul_add(0.1, -0.01);
        assert!((x.to_f64() - exact).abs() < 1e-33);
        let s = DoubleF64::new(1e16) + DoubleF64::new(1.0) - DoubleF64::new(1e16);
        assert_eq!(s.to_f64(), 1.0);
    }
}
