use super::{Dual, ScalarField, VectorFieldPair};
use crate::error::{check_dim, Error, Result};

fn finite_or(what: &str, x: &[f64], v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { what: what.to_string(), x: x.to_vec() })
    }
}

/// Exact gradient by one forward pass with all coordinates seeded.
pub fn grad(field: &ScalarField, x: &[f64]) -> Result<Vec<f64>> {
    check_dim("grad argument", field.dim(), x.len())?;
    let d = field.eval_generic(&Dual::seed(x));
    let g = d.gradient(x.len());
    if !d.value.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: format!("gradient of {}", field.expr()), x: x.to_vec() });
    }
    Ok(g)
}

/// L_f^k η(x). `k = 0` gives η(x).
pub fn lie_f(field: &ScalarField, vf: &VectorFieldPair, k: usize, x: &[f64]) -> Result<f64> {
    check_dim("field vs. dynamics", vf.n(), field.dim())?;
    check_dim("state", vf.n(), x.len())?;
    let flow = vf.flow(x, k);
    let series = field.expr().eval(&flow);
    finite_or("Lie derivative", x, series.derivative_at_zero(k))
}

/// ∇(L_f^k η)(x), obtained from the flow series with a seeded state.
pub fn lie_f_grad(field: &ScalarField, vf: &VectorFieldPair, k: usize, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dim("field vs. dynamics", vf.n(), field.dim())?;
    check_dim("state", vf.n(), x.len())?;
    let flow = vf.flow(&Dual::seed(x), k);
    let d = field.expr().eval(&flow).derivative_at_zero(k);
    let g = d.gradient(x.len());
    if !d.value.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "Lie derivative gradient".into(), x: x.to_vec() });
    }
    Ok((d.value, g))
}

/// Row vector L_g L_f^k η(x) = ∇(L_f^k η)(x) · g(x).
pub fn lie_g_of(field: &ScalarField, vf: &VectorFieldPair, k: usize, x: &[f64]) -> Result<Vec<f64>> {
    let (_, gradient) = lie_f_grad(field, vf, k, x)?;
    Ok(row_times_g(&gradient, vf, x))
}

pub(crate) fn row_times_g(row: &[f64], vf: &VectorFieldPair, x: &[f64]) -> Vec<f64> {
    let g = vf.g_at(x);
    (0..vf.m()).map(|j| (0..vf.n()).map(|i| row[i] * g[(i, j)]).sum()).collect()
}

/// Central-difference gradient; a test oracle only.
pub fn finite_diff_grad(field: &ScalarField, x: &[f64], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step must be > 0, got {step}")));
    }
    check_dim("finite-difference argument", field.dim(), x.len())?;
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = field.eval(&probe)?;
        probe[i] = x[i] - step;
        let down = field.eval(&probe)?;
        probe[i] = x[i];
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}
