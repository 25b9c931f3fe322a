use std::ops::{Add, Div, Mul, Neg, Sub};

use super::Scalar;

/// Truncated univariate Taylor series `Σ c_k t^k` with coefficients in `S`.
///
/// `coeffs[0]` is the value. A jet shorter than its partner in a binary
/// operation is treated as having zero higher coefficients, which is exact for
/// constants; all jets produced from the same seeded inputs share one length.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet<S> {
    pub coeffs: Vec<S>,
}

impl<S: Scalar> Jet<S> {
    pub fn constant(value: S) -> Self {
        Jet { coeffs: vec![value] }
    }

    pub fn from_coeffs(coeffs: Vec<S>) -> Self {
        assert!(!coeffs.is_empty(), "a jet needs at least a value coefficient");
        Jet { coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Truncation order (highest represented power of t).
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, k: usize) -> S {
        self.coeffs.get(k).cloned().unwrap_or_else(|| S::from_f64(0.0))
    }

    /// Time derivative; loses one order of truncation.
    pub fn derivative(&self) -> Jet<S> {
        if self.coeffs.len() == 1 {
            return Jet::constant(S::from_f64(0.0));
        }
        Jet {
            coeffs: self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(k, c)| c.scale((k + 1) as f64))
                .collect(),
        }
    }

    /// `d^k/dt^k` at t = 0, i.e. `k! c_k`.
    pub fn derivative_at_zero(&self, k: usize) -> S {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        self.coeff(k).scale(fact)
    }

    fn map(&self, f: impl Fn(&S) -> S) -> Jet<S> {
        Jet { coeffs: self.coeffs.iter().map(f).collect() }
    }

    fn zip(&self, other: &Jet<S>, f: impl Fn(S, S) -> S) -> Jet<S> {
        let n = self.len().max(other.len());
        Jet { coeffs: (0..n).map(|k| f(self.coeff(k), other.coeff(k))).collect() }
    }

    fn truncated(&self, n: usize) -> Jet<S> {
        Jet { coeffs: (0..n).map(|k| self.coeff(k)).collect() }
    }
}

fn sum<S: Scalar>(terms: impl Iterator<Item = S>) -> S {
    terms.fold(S::from_f64(0.0), |a, b| a + b)
}

impl<S: Scalar> Add for Jet<S> {
    type Output = Jet<S>;
    fn add(self, rhs: Jet<S>) -> Jet<S> {
        self.zip(&rhs, |a, b| a + b)
    }
}

impl<S: Scalar> Sub for Jet<S> {
    type Output = Jet<S>;
    fn sub(self, rhs: Jet<S>) -> Jet<S> {
        self.zip(&rhs, |a, b| a - b)
    }
}

impl<S: Scalar> Neg for Jet<S> {
    type Output = Jet<S>;
    fn neg(self) -> Jet<S> {
        Jet { coeffs: self.coeffs.into_iter().map(|c| -c).collect() }
    }
}

impl<S: Scalar> Mul for Jet<S> {
    type Output = Jet<S>;
    fn mul(self, rhs: Jet<S>) -> Jet<S> {
        if rhs.len() == 1 {
            let c = rhs.coeffs[0].clone();
            return self.map(|a| a.clone() * c.clone());
        }
        if self.len() == 1 {
            let c = self.coeffs[0].clone();
            return rhs.map(|b| c.clone() * b.clone());
        }
        let n = self.len().max(rhs.len());
        let coeffs = (0..n)
            .map(|k| sum((0..=k).map(|i| self.coeff(i) * rhs.coeff(k - i))))
            .collect();
        Jet { coeffs }
    }
}

impl<S: Scalar> Div for Jet<S> {
    type Output = Jet<S>;
    fn div(self, rhs: Jet<S>) -> Jet<S> {
        let b0 = rhs.coeffs[0].clone();
        if rhs.len() == 1 {
            return self.map(|a| a.clone() / b0.clone());
        }
        let n = self.len().max(rhs.len());
        let mut out: Vec<S> = Vec::with_capacity(n);
        for k in 0..n {
            let acc = sum((1..=k).map(|i| rhs.coeff(i) * out[k - i].clone()));
            out.push((self.coeff(k) - acc) / b0.clone());
        }
        Jet { coeffs: out }
    }
}

impl<S: Scalar> Scalar for Jet<S> {
    fn from_f64(c: f64) -> Self {
        Jet::constant(S::from_f64(c))
    }

    fn value(&self) -> f64 {
        self.coeffs[0].value()
    }

    fn scale(&self, c: f64) -> Self {
        self.map(|a| a.scale(c))
    }

    fn add_f64(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = out.coeffs[0].add_f64(c);
        out
    }

    fn exp(&self) -> Self {
        let n = self.len();
        let mut y: Vec<S> = Vec::with_capacity(n);
        y.push(self.coeffs[0].exp());
        for k in 1..n {
            let acc = sum((1..=k).map(|j| self.coeffs[j].scale(j as f64) * y[k - j].clone()));
            y.push(acc.scale(1.0 / k as f64));
        }
        Jet { coeffs: y }
    }

    fn ln(&self) -> Self {
        let n = self.len();
        let a0 = self.coeffs[0].clone();
        let mut y: Vec<S> = Vec::with_capacity(n);
        y.push(a0.ln());
        for k in 1..n {
            let acc = sum((1..k).map(|j| y[j].scale(j as f64) * self.coeffs[k - j].clone()));
            y.push((self.coeffs[k].clone() - acc.scale(1.0 / k as f64)) / a0.clone());
        }
        Jet { coeffs: y }
    }

    fn sin_cos(&self) -> (Self, Self) {
        let n = self.len();
        let (s0, c0) = self.coeffs[0].sin_cos();
        let mut s = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        s.push(s0);
        c.push(c0);
        for k in 1..n {
            let inv = 1.0 / k as f64;
            let sk = sum((1..=k).map(|j| self.coeffs[j].scale(j as f64) * c[k - j].clone()));
            let ck = sum((1..=k).map(|j| self.coeffs[j].scale(j as f64) * s[k - j].clone()));
            s.push(sk.scale(inv));
            c.push(ck.scale(-inv));
        }
        (Jet { coeffs: s }, Jet { coeffs: c })
    }

    fn sin(&self) -> Self {
        self.sin_cos().0
    }

    fn cos(&self) -> Self {
        self.sin_cos().1
    }

    fn sqrt(&self) -> Self {
        let n = self.len();
        let mut y: Vec<S> = Vec::with_capacity(n);
        let y0 = self.coeffs[0].sqrt();
        let two_y0 = y0.scale(2.0);
        y.push(y0);
        for k in 1..n {
            let acc = sum((1..k).map(|j| y[j].clone() * y[k - j].clone()));
            y.push((self.coeffs[k].clone() - acc) / two_y0.clone());
        }
        Jet { coeffs: y }
    }

    fn powf(&self, p: f64) -> Self {
        let n = self.len();
        let a0 = self.coeffs[0].clone();
        let mut y: Vec<S> = Vec::with_capacity(n);
        y.push(a0.powf(p));
        for k in 1..n {
            let acc = sum(
                (1..=k).map(|j| self.coeffs[j].scale((p + 1.0) * j as f64 - k as f64) * y[k - j].clone()),
            );
            y.push(acc / a0.scale(k as f64));
        }
        Jet { coeffs: y }
    }

    fn atan2(&self, x: &Self) -> Self {
        let n = self.len().max(x.len());
        let z0 = self.coeffs[0].atan2(&x.coeffs[0]);
        if n == 1 {
            return Jet::constant(z0);
        }
        // z' = (x y' - y x') / (x² + y²), integrated term by term.
        let y = self.truncated(n - 1);
        let xs = x.truncated(n - 1);
        let num = xs.clone() * self.truncated(n).derivative() - y.clone() * x.truncated(n).derivative();
        let den = xs.clone() * xs + y.clone() * y;
        let rate = num / den;
        let mut coeffs = Vec::with_capacity(n);
        coeffs.push(z0);
        for k in 0..n - 1 {
            coeffs.push(rate.coeff(k).scale(1.0 / (k + 1) as f64));
        }
        Jet { coeffs }
    }

    fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}
