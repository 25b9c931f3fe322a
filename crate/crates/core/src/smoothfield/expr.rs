use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use super::Scalar;

#[derive(Debug)]
enum Node {
    Const(f64),
    Var(usize),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Neg(Expr),
    Exp(Expr),
    Ln(Expr),
    Sin(Expr),
    Cos(Expr),
    Sqrt(Expr),
    Powf(Expr, f64),
    Powi(Expr, i32),
    Atan2(Expr, Expr),
    Abs(Expr),
    ClampMin(Expr, f64),
}

/// Immutable, cheaply clonable expression over state variables `x[0..]`.
///
/// Expressions are evaluated generically over any [`Scalar`], which is how
/// the same field yields plain values, gradients and Taylor coefficients.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(i) => write!(f, "x{i}"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "{a}*{b}"),
            Node::Div(a, b) => write!(f, "{a}/{b}"),
            Node::Neg(a) => write!(f, "-{a}"),
            Node::Exp(a) => write!(f, "exp({a})"),
            Node::Ln(a) => write!(f, "ln({a})"),
            Node::Sin(a) => write!(f, "sin({a})"),
            Node::Cos(a) => write!(f, "cos({a})"),
            Node::Sqrt(a) => write!(f, "sqrt({a})"),
            Node::Powf(a, p) => write!(f, "{a}^{p}"),
            Node::Powi(a, n) => write!(f, "{a}^{n}"),
            Node::Atan2(y, x) => write!(f, "atan2({y}, {x})"),
            Node::Abs(a) => write!(f, "|{a}|"),
            Node::ClampMin(a, c) => write!(f, "max({a}, {c})"),
        }
    }
}

impl Expr {
    fn node(n: Node) -> Expr {
        Expr(Arc::new(n))
    }

    pub fn constant(c: f64) -> Expr {
        Expr::node(Node::Const(c))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn var(i: usize) -> Expr {
        Expr::node(Node::Var(i))
    }

    /// `x[0..n]` as expressions.
    pub fn vars(n: usize) -> Vec<Expr> {
        (0..n).map(Expr::var).collect()
    }

    pub fn as_const(&self) -> Option<f64> {
        match &*self.0 {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn exp(&self) -> Expr {
        self.unary(Node::Exp, f64::exp)
    }
    pub fn ln(&self) -> Expr {
        self.unary(Node::Ln, f64::ln)
    }
    pub fn sin(&self) -> Expr {
        self.unary(Node::Sin, f64::sin)
    }
    pub fn cos(&self) -> Expr {
        self.unary(Node::Cos, f64::cos)
    }
    pub fn sqrt(&self) -> Expr {
        self.unary(Node::Sqrt, f64::sqrt)
    }
    pub fn abs(&self) -> Expr {
        self.unary(Node::Abs, f64::abs)
    }

    pub fn powf(&self, p: f64) -> Expr {
        if p == 1.0 {
            return self.clone();
        }
        if let Some(c) = self.as_const() {
            return Expr::constant(c.powf(p));
        }
        Expr::node(Node::Powf(self.clone(), p))
    }

    pub fn powi(&self, n: i32) -> Expr {
        match n {
            0 => Expr::constant(1.0),
            1 => self.clone(),
            _ => match self.as_const() {
                Some(c) => Expr::constant(c.powi(n)),
                None => Expr::node(Node::Powi(self.clone(), n)),
            },
        }
    }

    /// `atan2(self, x)`.
    pub fn atan2(&self, x: &Expr) -> Expr {
        Expr::node(Node::Atan2(self.clone(), x.clone()))
    }

    /// `max(self, floor)`; used as a numerical guard for denominators.
    pub fn clamp_min(&self, floor: f64) -> Expr {
        Expr::node(Node::ClampMin(self.clone(), floor))
    }

    /// The p-norm of `parts`, specialised to `sqrt` for p = 2 and to integer
    /// powers for even integer p (which keeps the expression smooth).
    pub fn norm_p(parts: &[Expr], p: f64) -> Expr {
        assert!(p >= 1.0, "p-norm requires p >= 1");
        if p == 2.0 {
            return sum(parts.iter().map(|e| e.powi(2))).sqrt();
        }
        let even_int = p.fract() == 0.0 && (p as i64) % 2 == 0 && p <= 64.0;
        let terms = parts.iter().map(|e| if even_int { e.powi(p as i32) } else { e.abs().powf(p) });
        sum(terms).powf(1.0 / p)
    }

    fn unary(&self, make: fn(Expr) -> Node, fold: fn(f64) -> f64) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(fold(c)),
            None => Expr::node(make(self.clone())),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match &*self.0 {
            Node::Const(_) => None,
            Node::Var(i) => Some(*i),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Atan2(a, b) => {
                a.max_var().max(b.max_var())
            }
            Node::Neg(a)
            | Node::Exp(a)
            | Node::Ln(a)
            | Node::Sin(a)
            | Node::Cos(a)
            | Node::Sqrt(a)
            | Node::Powf(a, _)
            | Node::Powi(a, _)
            | Node::Abs(a)
            | Node::ClampMin(a, _) => a.max_var(),
        }
    }

    /// Replaces every `x[i]` by `map(i)`.
    pub fn substitute(&self, map: &dyn Fn(usize) -> Expr) -> Expr {
        let s = |e: &Expr| e.substitute(map);
        match &*self.0 {
            Node::Const(_) => self.clone(),
            Node::Var(i) => map(*i),
            Node::Add(a, b) => s(a) + s(b),
            Node::Sub(a, b) => s(a) - s(b),
            Node::Mul(a, b) => s(a) * s(b),
            Node::Div(a, b) => s(a) / s(b),
            Node::Neg(a) => -s(a),
            Node::Exp(a) => s(a).exp(),
            Node::Ln(a) => s(a).ln(),
            Node::Sin(a) => s(a).sin(),
            Node::Cos(a) => s(a).cos(),
            Node::Sqrt(a) => s(a).sqrt(),
            Node::Powf(a, p) => s(a).powf(*p),
            Node::Powi(a, n) => s(a).powi(*n),
            Node::Atan2(y, x) => s(y).atan2(&s(x)),
            Node::Abs(a) => s(a).abs(),
            Node::ClampMin(a, c) => s(a).clamp_min(*c),
        }
    }

    /// Renames `x[i]` to `x[i + offset]`.
    pub fn shift_vars(&self, offset: usize) -> Expr {
        self.substitute(&|i| Expr::var(i + offset))
    }

    pub fn eval<S: Scalar>(&self, x: &[S]) -> S {
        match &*self.0 {
            Node::Const(c) => S::from_f64(*c),
            Node::Var(i) => x[*i].clone(),
            Node::Add(a, b) => match (a.as_const(), b.as_const()) {
                (Some(c), _) => b.eval(x).add_f64(c),
                (_, Some(c)) => a.eval(x).add_f64(c),
                _ => a.eval(x) + b.eval(x),
            },
            Node::Sub(a, b) => match (a.as_const(), b.as_const()) {
                (Some(c), _) => (-b.eval(x)).add_f64(c),
                (_, Some(c)) => a.eval(x).add_f64(-c),
                _ => a.eval(x) - b.eval(x),
            },
            Node::Mul(a, b) => match (a.as_const(), b.as_const()) {
                (Some(c), _) => b.eval(x).scale(c),
                (_, Some(c)) => a.eval(x).scale(c),
                _ => a.eval(x) * b.eval(x),
            },
            Node::Div(a, b) => match b.as_const() {
                Some(c) => a.eval(x).scale(1.0 / c),
                None => a.eval(x) / b.eval(x),
            },
            Node::Neg(a) => -a.eval(x),
            Node::Exp(a) => a.eval(x).exp(),
            Node::Ln(a) => a.eval(x).ln(),
            Node::Sin(a) => a.eval(x).sin(),
            Node::Cos(a) => a.eval(x).cos(),
            Node::Sqrt(a) => a.eval(x).sqrt(),
            Node::Powf(a, p) => a.eval(x).powf(*p),
            Node::Powi(a, n) => a.eval(x).powi(*n),
            Node::Atan2(y, xe) => y.eval(x).atan2(&xe.eval(x)),
            Node::Abs(a) => a.eval(x).abs(),
            Node::ClampMin(a, c) => {
                let v = a.eval(x);
                if v.value() < *c {
                    S::from_f64(*c)
                } else {
                    v
                }
            }
        }
    }
}

/// Sum of expressions; empty sums are zero.
pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
    terms.into_iter().fold(Expr::zero(), |a, b| a + b)
}

/// Dot product of two expression slices of equal length.
pub fn dot(a: &[Expr], b: &[Expr]) -> Expr {
    assert_eq!(a.len(), b.len());
    sum(a.iter().zip(b).map(|(x, y)| x.clone() * y.clone()))
}

impl From<f64> for Expr {
    fn from(c: f64) -> Expr {
        Expr::constant(c)
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a + b),
            (Some(a), _) if a == 0.0 => rhs,
            (_, Some(b)) if b == 0.0 => self,
            _ => Expr::node(Node::Add(self, rhs)),
        }
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a - b),
            (Some(a), _) if a == 0.0 => -rhs,
            (_, Some(b)) if b == 0.0 => self,
            _ => Expr::node(Node::Sub(self, rhs)),
        }
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a * b),
            (Some(a), _) | (_, Some(a)) if a == 0.0 => Expr::zero(),
            (Some(a), _) if a == 1.0 => rhs,
            (_, Some(b)) if b == 1.0 => self,
            _ => Expr::node(Node::Mul(self, rhs)),
        }
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a / b),
            (Some(a), _) if a == 0.0 => Expr::zero(),
            (_, Some(b)) if b == 1.0 => self,
            _ => Expr::node(Node::Div(self, rhs)),
        }
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match &*self.0 {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::node(Node::Neg(self)),
        }
    }
}

macro_rules! scalar_rhs {
    ($($tr:ident $method:ident),*) => {$(
        impl $tr<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $tr::$method(self, Expr::constant(rhs))
            }
        }
        impl $tr<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $tr::$method(Expr::constant(self), rhs)
            }
        }
        impl $tr<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $tr::$method(self.clone(), rhs.clone())
            }
        }
        impl $tr<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $tr::$method(self.clone(), rhs)
            }
        }
        impl $tr<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $tr::$method(self, rhs.clone())
            }
        }
        impl $tr<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $tr::$method(self.clone(), Expr::constant(rhs))
            }
        }
        impl $tr<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $tr::$method(Expr::constant(self), rhs.clone())
            }
        }
    )*};
}

scalar_rhs!(Add add, Sub sub, Mul mul, Div div);
