use std::ops::{Add, Div, Mul, Neg, Sub};

use super::Scalar;

/// First-order forward-mode value: a real number together with its gradient
/// with respect to a fixed set of seed variables.
///
/// An empty gradient denotes a constant; gradients of different lengths are
/// combined by treating missing entries as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl Dual {
    pub fn constant(value: f64) -> Self {
        Dual { value, grad: Vec::new() }
    }

    /// The `index`-th of `n` seed variables at `value`.
    pub fn variable(value: f64, index: usize, n: usize) -> Self {
        let mut grad = vec![0.0; n];
        grad[index] = 1.0;
        Dual { value, grad }
    }

    /// Seeds every component of `x` as an independent variable.
    pub fn seed(x: &[f64]) -> Vec<Dual> {
        let n = x.len();
        x.iter().enumerate().map(|(i, &v)| Dual::variable(v, i, n)).collect()
    }

    /// Gradient padded (or truncated) to `n` entries.
    pub fn gradient(&self, n: usize) -> Vec<f64> {
        let mut g = self.grad.clone();
        g.resize(n, 0.0);
        g
    }

    fn chain(&self, value: f64, slope: f64) -> Dual {
        Dual { value, grad: self.grad.iter().map(|g| g * slope).collect() }
    }
}

fn zip_with(a: &[f64], b: &[f64], op: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| op(a.get(i).copied().unwrap_or(0.0), b.get(i).copied().unwrap_or(0.0)))
        .collect()
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual { value: self.value + rhs.value, grad: zip_with(&self.grad, &rhs.grad, |a, b| a + b) }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual { value: self.value - rhs.value, grad: zip_with(&self.grad, &rhs.grad, |a, b| a - b) }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        let (a, b) = (self.value, rhs.value);
        Dual { value: a * b, grad: zip_with(&self.grad, &rhs.grad, |da, db| da * b + a * db) }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let (a, b) = (self.value, rhs.value);
        let q = a / b;
        Dual { value: q, grad: zip_with(&self.grad, &rhs.grad, |da, db| (da - q * db) / b) }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { value: -self.value, grad: self.grad.into_iter().map(|g| -g).collect() }
    }
}

impl Scalar for Dual {
    fn from_f64(c: f64) -> Self {
        Dual::constant(c)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn scale(&self, c: f64) -> Self {
        self.chain(self.value * c, c)
    }
    fn add_f64(&self, c: f64) -> Self {
        Dual { value: self.value + c, grad: self.grad.clone() }
    }
    fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }
    fn ln(&self) -> Self {
        self.chain(self.value.ln(), 1.0 / self.value)
    }
    fn sin(&self) -> Self {
        self.chain(self.value.sin(), self.value.cos())
    }
    fn cos(&self) -> Self {
        self.chain(self.value.cos(), -self.value.sin())
    }
    fn sqrt(&self) -> Self {
        let r = self.value.sqrt();
        self.chain(r, 0.5 / r)
    }
    fn powf(&self, p: f64) -> Self {
        self.chain(self.value.powf(p), p * self.value.powf(p - 1.0))
    }
    fn powi(&self, n: i32) -> Self {
        let slope = if n == 0 { 0.0 } else { n as f64 * self.value.powi(n - 1) };
        self.chain(self.value.powi(n), slope)
    }
    fn atan2(&self, x: &Self) -> Self {
        let (yv, xv) = (self.value, x.value);
        if yv == 0.0 && xv == 0.0 {
            return Dual { value: f64::NAN, grad: zip_with(&self.grad, &x.grad, |_, _| f64::NAN) };
        }
        let r2 = xv * xv + yv * yv;
        Dual {
            value: yv.atan2(xv),
            grad: zip_with(&self.grad, &x.grad, |dy, dx| (xv * dy - yv * dx) / r2),
        }
    }
    fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}
