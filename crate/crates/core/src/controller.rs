//! Closed-form minimizer of the slack-relaxed safety-filter program
//!
//!   min_{u, μ}  ½ uᵀQu + cᵀu + ½ γ μ²
//!   s.t.        L_f h + L_g h u + α(h) + μ h ≥ 0.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::composer::{CompositeEval, CompositeRCBF};
use crate::error::{check_dim, Error, Result};
use crate::hocbf::{norm, ClassKappa};
use crate::smoothfield::{Expr, Scalar};

/// J(x, u) = ½ uᵀ Q(x) u + c(x)ᵀ u.
#[derive(Clone, Debug)]
pub struct QuadraticCost {
    n: usize,
    m: usize,
    /// Row-major m×m; `None` means the identity.
    q: Option<Vec<Expr>>,
    c: Vec<Expr>,
}

/// A cost evaluated at one state.
#[derive(Clone, Debug)]
pub struct CostAt {
    pub q: Option<DMatrix<f64>>,
    pub c: DVector<f64>,
}

impl QuadraticCost {
    pub fn new(n: usize, q: Vec<Vec<Expr>>, c: Vec<Expr>) -> Result<Self> {
        let m = c.len();
        check_dim("cost matrix rows", m, q.len())?;
        for row in &q {
            check_dim("cost matrix columns", m, row.len())?;
        }
        let q: Vec<Expr> = q.into_iter().flatten().collect();
        let cost = QuadraticCost { n, m, q: Some(q), c };
        cost.check_vars()?;
        Ok(cost)
    }

    /// Q = I, c = −u_d: the minimum-intervention cost ½‖u − u_d‖² + const.
    pub fn min_intervention(n: usize, u_desired: Vec<Expr>) -> Result<Self> {
        let m = u_desired.len();
        let cost = QuadraticCost { n, m, q: None, c: u_desired.into_iter().map(|e| -e).collect() };
        cost.check_vars()?;
        Ok(cost)
    }

    fn check_vars(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Empty("control input"));
        }
        let all = self.c.iter().chain(self.q.iter().flatten());
        for e in all {
            if let Some(i) = e.max_var() {
                if i >= self.n {
                    return Err(Error::DimensionMismatch {
                        what: format!("cost entry {e} references x{i}"),
                        expected: self.n,
                        got: i + 1,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_identity(&self) -> bool {
        self.q.is_none()
    }

    pub fn c_exprs(&self) -> &[Expr] {
        &self.c
    }

    pub fn q_exprs(&self) -> Option<&[Expr]> {
        self.q.as_deref()
    }

    /// The same cost read on a larger state whose leading coordinates are x.
    pub fn lifted(&self, n: usize) -> QuadraticCost {
        assert!(n >= self.n);
        QuadraticCost { n, ..self.clone() }
    }

    pub fn at(&self, x: &[f64]) -> Result<CostAt> {
        if x.len() < self.n {
            return Err(Error::DimensionMismatch { what: "cost state".into(), expected: self.n, got: x.len() });
        }
        let c = DVector::from_iterator(self.m, self.c.iter().map(|e| e.eval(x)));
        let q = self.q.as_ref().map(|q| DMatrix::from_row_iterator(self.m, self.m, q.iter().map(|e| e.eval(x))));
        Ok(CostAt { q, c })
    }

    /// u_d = −Q⁻¹c over any scalar type (jets give its time derivatives).
    pub fn desired_generic<S: Scalar>(&self, x: &[S]) -> Option<Vec<S>> {
        let c: Vec<S> = self.c.iter().map(|e| -e.eval(x)).collect();
        match &self.q {
            None => Some(c),
            Some(q) => {
                let a: Vec<Vec<S>> =
                    (0..self.m).map(|i| (0..self.m).map(|j| q[i * self.m + j].eval(x)).collect()).collect();
                cholesky_solve(a, c)
            }
        }
    }
}

/// Solves A y = b for symmetric positive-definite A over any scalar type.
/// Returns `None` when a pivot is not positive.
pub fn cholesky_solve<S: Scalar>(a: Vec<Vec<S>>, b: Vec<S>) -> Option<Vec<S>> {
    let m = b.len();
    let mut l: Vec<Vec<S>> = vec![Vec::with_capacity(m); m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = a[i][j].clone();
            for k in 0..j {
                s = s - l[i][k].clone() * l[j][k].clone();
            }
            if i == j {
                if !(s.value() > 0.0) {
                    return None;
                }
                l[i].push(s.sqrt());
            } else {
                let v = s / l[j][j].clone();
                l[i].push(v);
            }
        }
    }
    let mut y: Vec<S> = Vec::with_capacity(m);
    for i in 0..m {
        let mut s = b[i].clone();
        for k in 0..i {
            s = s - l[i][k].clone() * y[k].clone();
        }
        y.push(s / l[i][i].clone());
    }
    let mut z = y;
    for i in (0..m).rev() {
        let mut s = z[i].clone();
        for k in i + 1..m {
            s = s - l[k][i].clone() * z[k].clone();
        }
        z[i] = s / l[i][i].clone();
    }
    Some(z)
}

impl CostAt {
    /// Q⁻¹ applied to each column of `rhs`.
    fn solve(&self, rhs: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
        match &self.q {
            None => Ok(rhs.clone()),
            Some(q) => {
                let sym = (q - q.transpose()).abs().max() <= 1e-10 * q.abs().max().max(1.0);
                let chol = q.clone().cholesky().filter(|_| sym);
                chol.map(|c| c.solve(rhs)).ok_or_else(|| Error::NotPositiveDefinite { x: x.to_vec() })
            }
        }
    }

    /// u_d = −Q⁻¹c.
    pub fn minimizer(&self, x: &[f64]) -> Result<DVector<f64>> {
        let c = DMatrix::from_column_slice(self.c.len(), 1, self.c.as_slice());
        Ok(-self.solve(&c, x)?.column(0).into_owned())
    }
}

#[derive(Clone, Debug)]
pub struct SafeFilterParams {
    pub gamma: f64,
    pub alpha: ClassKappa,
    /// Smallest admissible d(x) on the active branch.
    pub d_min: f64,
}

impl SafeFilterParams {
    pub const DEFAULT_D_MIN: f64 = 1e-12;

    pub fn new(gamma: f64, alpha: ClassKappa) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
        }
        alpha.validate()?;
        Ok(SafeFilterParams { gamma, alpha, d_min: Self::DEFAULT_D_MIN })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SafeFilterOutput {
    pub u: Vec<f64>,
    pub mu: f64,
    pub lambda: f64,
    pub omega: f64,
    pub active: bool,
}

/// The closed-form solution from already-evaluated ingredients.
pub fn solve_closed_form(
    cost: &CostAt,
    lf_h: f64,
    lg_h: &[f64],
    h: f64,
    params: &SafeFilterParams,
    x: &[f64],
) -> Result<SafeFilterOutput> {
    let m = cost.c.len();
    check_dim("L_g h", m, lg_h.len())?;
    let mut rhs = DMatrix::zeros(m, 2);
    rhs.set_column(0, &cost.c);
    rhs.set_column(1, &DVector::from_column_slice(lg_h));
    let solved = cost.solve(&rhs, x)?;
    let qinv_c = solved.column(0);
    let qinv_lg = solved.column(1);

    let lg = DVector::from_column_slice(lg_h);
    let omega = lf_h - lg.dot(&qinv_c) + params.alpha.apply(&h);
    let (lambda, active) = if omega < 0.0 {
        let d = lg.dot(&qinv_lg) + h * h / params.gamma;
        if !(d > params.d_min) {
            return Err(Error::Degenerate { x: x.to_vec(), lg_h_norm: norm(lg_h), h });
        }
        (-omega / d, true)
    } else {
        (0.0, false)
    };
    let u: Vec<f64> = (0..m).map(|i| -qinv_c[i] + qinv_lg[i] * lambda).collect();
    Ok(SafeFilterOutput { u, mu: h * lambda / params.gamma, lambda, omega, active })
}

/// ω(x) = L_f h − L_g h Q⁻¹ c + α(h).
pub fn omega(cost: &QuadraticCost, rcbf: &CompositeRCBF, params: &SafeFilterParams, x: &[f64]) -> Result<f64> {
    Ok(filter(cost, rcbf, params, x)?.omega)
}

pub fn filter(cost: &QuadraticCost, rcbf: &CompositeRCBF, params: &SafeFilterParams, x: &[f64]) -> Result<SafeFilterOutput> {
    let eval = rcbf.evaluate(x)?;
    filter_with(cost, &eval, params, x)
}

/// [`filter`] with a composite evaluation the caller already holds.
pub fn filter_with(
    cost: &QuadraticCost,
    eval: &CompositeEval,
    params: &SafeFilterParams,
    x: &[f64],
) -> Result<SafeFilterOutput> {
    check_dim("control input", cost.m(), eval.lg_h.len())?;
    let at = cost.at(x)?;
    solve_closed_form(&at, eval.lf_h, &eval.lg_h, eval.h, params, x)
}

/// L_f h + L_g h·u + α(h) + μ h.
pub fn constraint_residual(
    rcbf: &CompositeRCBF,
    params: &SafeFilterParams,
    x: &[f64],
    out: &SafeFilterOutput,
) -> Result<f64> {
    let e = rcbf.evaluate(x)?;
    check_dim("control input", e.lg_h.len(), out.u.len())?;
    let lgu: f64 = e.lg_h.iter().zip(&out.u).map(|(a, b)| a * b).sum();
    Ok(e.lf_h + lgu + params.alpha.apply(&e.h) + out.mu * e.h)
}
