use nalgebra::{DMatrix, DVector};

use super::{Expr, Jet, Scalar};
use crate::error::{check_dim, Error, Result};

/// A smooth scalar function on ℝⁿ.
#[derive(Clone, Debug)]
pub struct ScalarField {
    dim: usize,
    expr: Expr,
}

impl ScalarField {
    pub fn new(dim: usize, expr: Expr) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("field dimension must be positive".into()));
        }
        if let Some(i) = expr.max_var() {
            if i >= dim {
                return Err(Error::DimensionMismatch {
                    what: format!("field {expr} references x{i}"),
                    expected: dim,
                    got: i + 1,
                });
            }
        }
        Ok(ScalarField { dim, expr })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim("field argument", self.dim, x.len())?;
        Ok(self.expr.eval(x))
    }

    pub fn eval_generic<S: Scalar>(&self, x: &[S]) -> S {
        self.expr.eval(x)
    }

    /// Same expression viewed as a field on a larger space (extra trailing
    /// coordinates are ignored).
    pub fn lifted(&self, dim: usize) -> Result<ScalarField> {
        ScalarField::new(dim, self.expr.clone())
    }
}

/// Control-affine dynamics ẋ = f(x) + g(x)u with x ∈ ℝⁿ, u ∈ ℝᵐ.
#[derive(Clone, Debug)]
pub struct VectorFieldPair {
    n: usize,
    m: usize,
    f: Vec<Expr>,
    /// Row-major n×m.
    g: Vec<Expr>,
}

impl VectorFieldPair {
    pub fn new(n: usize, m: usize, f: Vec<Expr>, g: Vec<Vec<Expr>>) -> Result<Self> {
        check_dim("drift f", n, f.len())?;
        check_dim("input map g rows", n, g.len())?;
        for row in &g {
            check_dim("input map g columns", m, row.len())?;
        }
        let g: Vec<Expr> = g.into_iter().flatten().collect();
        for e in f.iter().chain(&g) {
            if let Some(i) = e.max_var() {
                if i >= n {
                    return Err(Error::DimensionMismatch {
                        what: format!("vector field entry {e} references x{i}"),
                        expected: n,
                        got: i + 1,
                    });
                }
            }
        }
        Ok(VectorFieldPair { n, m, f, g })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn f_exprs(&self) -> &[Expr] {
        &self.f
    }

    pub fn g_expr(&self, row: usize, col: usize) -> &Expr {
        &self.g[row * self.m + col]
    }

    pub fn g_rows(&self) -> Vec<Vec<Expr>> {
        self.g.chunks(self.m.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn f_at(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.n, self.f.iter().map(|e| e.eval(x)))
    }

    pub fn g_at(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.n, self.m, self.g.iter().map(|e| e.eval(x)))
    }

    /// Closed-loop vector field f(x) + g(x)u.
    pub fn velocity(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        let mut v = self.f_at(x);
        for i in 0..self.n {
            for j in 0..self.m {
                let gij = self.g[i * self.m + j].eval(x);
                v[i] += gij * u[j];
            }
        }
        v
    }

    /// Taylor coefficients of the drift flow x(t) with x(0) = `x0`, through
    /// order `order`. Coefficients obey x_{k+1} = [f(x(t))]_k / (k + 1).
    pub fn flow<S: Scalar>(&self, x0: &[S], order: usize) -> Vec<Jet<S>> {
        flow_series(&self.f, x0, order)
    }
}

/// Taylor series of the solution of ẋ = field(x), x(0) = x0.
pub fn flow_series<S: Scalar>(field: &[Expr], x0: &[S], order: usize) -> Vec<Jet<S>> {
    let mut xs: Vec<Jet<S>> = x0.iter().map(|v| Jet::constant(v.clone())).collect();
    for k in 0..order {
        let rates: Vec<Jet<S>> = field.iter().map(|e| e.eval(&xs)).collect();
        for (xi, ri) in xs.iter_mut().zip(rates) {
            xi.coeffs.push(ri.coeff(k).scale(1.0 / (k + 1) as f64));
        }
    }
    xs
}
