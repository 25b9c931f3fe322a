use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Number-like values that expression trees can be evaluated over.
///
/// Implemented for `f64`, [`Dual`](super::Dual) (value + gradient) and
/// [`Jet`](super::Jet) (truncated Taylor series over another scalar). Jets
/// may nest, e.g. `Jet<Dual>` carries time-series coefficients each of which
/// carries a state gradient.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// A constant. Constants carry no derivative information; missing
    /// coefficients are read as zero.
    fn from_f64(c: f64) -> Self;
    /// The plain real part.
    fn value(&self) -> f64;

    fn scale(&self, c: f64) -> Self;
    fn add_f64(&self, c: f64) -> Self;

    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powf(&self, p: f64) -> Self;
    /// `atan2(self, x)`; NaN at the origin.
    fn atan2(&self, x: &Self) -> Self;

    fn sin_cos(&self) -> (Self, Self) {
        (self.sin(), self.cos())
    }

    fn powi(&self, n: i32) -> Self {
        if n < 0 {
            return Self::from_f64(1.0) / self.powi(-n);
        }
        let mut acc = Self::from_f64(1.0);
        let mut base = self.clone();
        let mut k = n as u32;
        let mut first = true;
        while k > 0 {
            if k & 1 == 1 {
                acc = if first { base.clone() } else { acc * base.clone() };
                first = false;
            }
            k >>= 1;
            if k > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }

    fn abs(&self) -> Self {
        if self.value() < 0.0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn is_finite(&self) -> bool {
        self.value().is_finite()
    }
}

impl Scalar for f64 {
    fn from_f64(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn scale(&self, c: f64) -> Self {
        self * c
    }
    fn add_f64(&self, c: f64) -> Self {
        self + c
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn powf(&self, p: f64) -> Self {
        f64::powf(*self, p)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
    fn atan2(&self, x: &Self) -> Self {
        if *self == 0.0 && *x == 0.0 {
            f64::NAN
        } else {
            f64::atan2(*self, *x)
        }
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
}
