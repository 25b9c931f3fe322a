//! Higher-order barrier chains b_{j,0} = h_j, b_{j,i+1} = L_f b_{j,i} + α_{j,i}(b_{j,i}).
//!
//! Chain values are evaluated on Taylor series of the drift flow: if B_i(t)
//! denotes b_{j,i}(x(t)) then B_{i+1} = B_i' + α_i(B_i), so one flow series of
//! order d − 1 yields every level at once, and a dual-seeded flow yields
//! their gradients.

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::smoothfield::{row_times_g, Dual, Expr, Jet, Scalar, ScalarField, VectorFieldPair};

/// Extended class-K function used in barrier chains and safety filters.
#[derive(Clone, Debug)]
pub enum ClassKappa {
    /// α(s) = κ s
    Linear(f64),
    /// α(s) = κ s³
    Cubic(f64),
    /// A user map in the single variable `x0`. `lipschitz` bounds |α'| on
    /// `interval`; both are checked on a grid at construction.
    Custom { map: Expr, lipschitz: f64, interval: (f64, f64) },
}

impl ClassKappa {
    pub fn linear(kappa: f64) -> Result<Self> {
        let a = ClassKappa::Linear(kappa);
        a.validate()?;
        Ok(a)
    }

    pub fn cubic(kappa: f64) -> Result<Self> {
        let a = ClassKappa::Cubic(kappa);
        a.validate()?;
        Ok(a)
    }

    pub fn custom(map: Expr, lipschitz: f64, interval: (f64, f64)) -> Result<Self> {
        let a = ClassKappa::Custom { map, lipschitz, interval };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ClassKappa::Linear(k) | ClassKappa::Cubic(k) => {
                if !(k.is_finite() && *k > 0.0) {
                    return Err(Error::InvalidParameter(format!("class-K coefficient must be > 0, got {k}")));
                }
            }
            ClassKappa::Custom { map, lipschitz, interval } => {
                if map.max_var().unwrap_or(0) > 0 {
                    return Err(Error::InvalidParameter("custom class-K map must depend on x0 only".into()));
                }
                let (lo, hi) = *interval;
                if !(lo < 0.0 && hi > 0.0 && lipschitz.is_finite() && *lipschitz > 0.0) {
                    return Err(Error::InvalidParameter(
                        "custom class-K map needs an interval around 0 and a positive Lipschitz bound".into(),
                    ));
                }
                if map.eval(&[0.0]).abs() > 1e-12 {
                    return Err(Error::InvalidParameter("custom class-K map must satisfy α(0) = 0".into()));
                }
                let grid = 512;
                let mut prev = f64::NEG_INFINITY;
                for i in 0..=grid {
                    let s = lo + (hi - lo) * i as f64 / grid as f64;
                    let d = map.eval(&[Dual::variable(s, 0, 1)]);
                    if !(d.value > prev) {
                        return Err(Error::InvalidParameter(format!(
                            "custom class-K map is not strictly increasing near s = {s}"
                        )));
                    }
                    if d.gradient(1)[0].abs() > *lipschitz * (1.0 + 1e-9) {
                        return Err(Error::InvalidParameter(format!(
                            "custom class-K map exceeds its Lipschitz bound near s = {s}"
                        )));
                    }
                    prev = d.value;
                }
            }
        }
        Ok(())
    }

    pub fn apply<S: Scalar>(&self, s: &S) -> S {
        match self {
            ClassKappa::Linear(k) => s.scale(*k),
            ClassKappa::Cubic(k) => s.powi(3).scale(*k),
            ClassKappa::Custom { map, .. } => map.eval(std::slice::from_ref(s)),
        }
    }
}

/// One safety function h with declared relative degree d and the class-K
/// functions α_0..α_{d-2} of its chain.
#[derive(Clone, Debug)]
pub struct BarrierChain {
    h: ScalarField,
    degree: usize,
    alphas: Vec<ClassKappa>,
}

impl BarrierChain {
    pub fn new(h: ScalarField, degree: usize, alphas: Vec<ClassKappa>) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidParameter("relative degree must be at least 1".into()));
        }
        if alphas.len() != degree - 1 {
            return Err(Error::InvalidParameter(format!(
                "relative degree {degree} needs {} class-K functions, got {}",
                degree - 1,
                alphas.len()
            )));
        }
        for a in &alphas {
            a.validate()?;
        }
        Ok(BarrierChain { h, degree, alphas })
    }

    pub fn h(&self) -> &ScalarField {
        &self.h
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn alphas(&self) -> &[ClassKappa] {
        &self.alphas
    }

    /// Series of b_0(x(t)), …, b_{d-1}(x(t)) along a flow series. Level i is
    /// exact through order (flow order − i).
    pub fn series<S: Scalar>(&self, flow: &[Jet<S>]) -> Vec<Jet<S>> {
        let mut levels = Vec::with_capacity(self.degree);
        let mut b = self.h.expr().eval(flow);
        for alpha in &self.alphas {
            let next = b.derivative() + alpha.apply(&b);
            levels.push(b);
            b = next;
        }
        levels.push(b);
        levels
    }

    fn check(&self, vf: &VectorFieldPair, x: &[f64]) -> Result<()> {
        check_dim("barrier vs. dynamics", vf.n(), self.h.dim())?;
        check_dim("state", vf.n(), x.len())
    }
}

/// b_i(x).
pub fn chain_value(chain: &BarrierChain, vf: &VectorFieldPair, i: usize, x: &[f64]) -> Result<f64> {
    chain.check(vf, x)?;
    if i >= chain.degree {
        return Err(Error::IndexOutOfRange { index: i, degree: chain.degree });
    }
    let flow = vf.flow(x, i);
    let v = chain.series(&flow)[i].coeffs[0];
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { what: format!("chain level {i}"), x: x.to_vec() })
    }
}

/// (b_{d-1}(x), ∇b_{d-1}(x)), differentiating through every α.
pub fn terminal_and_grad(chain: &BarrierChain, vf: &VectorFieldPair, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    chain.check(vf, x)?;
    let flow = vf.flow(&Dual::seed(x), chain.degree - 1);
    let top = chain.series(&flow).pop().expect("nonempty chain").coeffs.swap_remove(0);
    let g = top.gradient(x.len());
    if !top.value.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "terminal chain value".into(), x: x.to_vec() });
    }
    Ok((top.value, g))
}

#[derive(Clone, Debug, Serialize)]
pub struct RelativeDegreeSample {
    pub x: Vec<f64>,
    /// ‖L_g L_f^i h(x)‖ for i = 0..d-1.
    pub norms: Vec<f64>,
    pub pass: bool,
    /// First order at which the check failed, if any.
    pub failed_at: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RelativeDegreeReport {
    pub degree: usize,
    pub tol: f64,
    pub samples: Vec<RelativeDegreeSample>,
    pub all_pass: bool,
}

impl RelativeDegreeReport {
    pub fn failures(&self) -> impl Iterator<Item = &RelativeDegreeSample> {
        self.samples.iter().filter(|s| !s.pass)
    }
}

/// ‖L_g L_f^i η(x)‖ for i = 0..count-1, from one dual-seeded flow series.
pub(crate) fn lie_g_norms(eta: &Expr, vf: &VectorFieldPair, x: &[f64], count: usize) -> Vec<Vec<f64>> {
    let order = count.saturating_sub(1);
    let flow = vf.flow(&Dual::seed(x), order);
    let series = eta.eval(&flow);
    (0..count)
        .map(|i| row_times_g(&series.derivative_at_zero(i).gradient(x.len()), vf, x))
        .collect()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Verifies L_g L_f^i h ≈ 0 for i ≤ d−2 and L_g L_f^{d−1} h ≠ 0 at each sample.
pub fn check_relative_degree(
    chain: &BarrierChain,
    vf: &VectorFieldPair,
    samples: &[Vec<f64>],
    tol: f64,
) -> Result<RelativeDegreeReport> {
    if samples.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let d = chain.degree;
    let mut out = Vec::with_capacity(samples.len());
    for x in samples {
        chain.check(vf, x)?;
        let norms: Vec<f64> = lie_g_norms(chain.h.expr(), vf, x, d).iter().map(|r| norm(r)).collect();
        let failed_at = (0..d).find(|&i| if i + 1 < d { !(norms[i] <= tol) } else { !(norms[i] > tol) });
        out.push(RelativeDegreeSample { x: x.clone(), norms, pass: failed_at.is_none(), failed_at });
    }
    let all_pass = out.iter().all(|s| s.pass);
    Ok(RelativeDegreeReport { degree: d, tol, samples: out, all_pass })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::smoothfield::{finite_diff_grad, lie_f_grad};

    fn x(i: usize) -> Expr {
        Expr::var(i)
    }

    fn double_integrator() -> VectorFieldPair {
        VectorFieldPair::new(2, 1, vec![x(1), Expr::zero()], vec![vec![Expr::zero()], vec![Expr::constant(1.0)]])
            .unwrap()
    }

    fn unicycle() -> VectorFieldPair {
        let z = Expr::zero;
        let one = || Expr::constant(1.0);
        VectorFieldPair::new(
            4,
            2,
            vec![x(2) * x(3).cos(), x(2) * x(3).sin(), z(), z()],
            vec![vec![z(), z()], vec![z(), z()], vec![one(), z()], vec![z(), one()]],
        )
        .unwrap()
    }

    fn obstacle() -> ScalarField {
        ScalarField::new(4, Expr::norm_p(&[x(0) - 1.0, (x(1) + 2.0) * 0.5], 2.0) - 1.5).unwrap()
    }

    #[test]
    fn degree_one_chain_is_h() {
        let h = ScalarField::new(4, 9.0 - x(2)).unwrap();
        let chain = BarrierChain::new(h, 1, vec![]).unwrap();
        assert_eq!(chain_value(&chain, &unicycle(), 0, &[0.0, 0.0, 2.5, 1.0]).unwrap(), 6.5);
        let (v, g) = terminal_and_grad(&chain, &unicycle(), &[0.0, 0.0, 2.5, 1.0]).unwrap();
        assert_eq!((v, g), (6.5, vec![0.0, 0.0, -1.0, 0.0]));
    }

    #[test]
    fn double_integrator_chain() {
        let chain = BarrierChain::new(ScalarField::new(2, x(0)).unwrap(), 2, vec![ClassKappa::linear(1.0).unwrap()])
            .unwrap();
        let vf = double_integrator();
        assert_eq!(chain_value(&chain, &vf, 1, &[1.0, 2.0]).unwrap(), 3.0);
        assert_eq!(chain_value(&chain, &vf, 0, &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(terminal_and_grad(&chain, &vf, &[1.0, 2.0]).unwrap(), (3.0, vec![1.0, 1.0]));
        assert!(matches!(
            chain_value(&chain, &vf, 2, &[1.0, 2.0]),
            Err(Error::IndexOutOfRange { index: 2, degree: 2 })
        ));
    }

    #[test]
    fn obstacle_chain_on_boundary_equals_lie_derivative() {
        let chain = BarrierChain::new(obstacle(), 2, vec![ClassKappa::linear(10.0).unwrap()]).unwrap();
        // (1 + 1.5, -2): on the boundary
        let s = [2.5, -2.0, 1.2, 0.9];
        assert_abs_diff_eq!(chain_value(&chain, &unicycle(), 0, &s).unwrap(), 0.0, epsilon = 1e-15);
        let b1 = chain_value(&chain, &unicycle(), 1, &s).unwrap();
        assert_abs_diff_eq!(b1, 1.2 * 0.9f64.cos(), epsilon = 1e-14);
    }

    #[test]
    fn terminal_gradient_matches_finite_differences() {
        for alpha in [ClassKappa::linear(10.0).unwrap(), ClassKappa::cubic(2.0).unwrap()] {
            let chain = BarrierChain::new(obstacle(), 2, vec![alpha]).unwrap();
            let vf = unicycle();
            let s = [3.0, 1.0, 0.7, -0.4];
            let (_, g) = terminal_and_grad(&chain, &vf, &s).unwrap();
            let chain_c = chain.clone();
            let vf_c = vf.clone();
            let wrapped = move |p: &[f64]| chain_value(&chain_c, &vf_c, 1, p).unwrap();
            for i in 0..4 {
                let mut up = s;
                let mut dn = s;
                up[i] += 1e-6;
                dn[i] -= 1e-6;
                let fd = (wrapped(&up) - wrapped(&dn)) / 2e-6;
                assert!((fd - g[i]).abs() <= 1e-6, "{i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn relative_degree_checks() {
        let vf = unicycle();
        let samples: Vec<Vec<f64>> = (0..20)
            .map(|k| {
                let t = k as f64;
                vec![4.0 + (0.3 * t).sin(), 2.0 * (0.7 * t).cos(), 0.5 + 0.1 * t, 0.37 * t]
            })
            .collect();
        let chain = BarrierChain::new(obstacle(), 2, vec![ClassKappa::linear(10.0).unwrap()]).unwrap();
        assert!(check_relative_degree(&chain, &vf, &samples, 1e-9).unwrap().all_pass);

        let speed = ScalarField::new(4, 9.0 - x(2)).unwrap();
        let ok = BarrierChain::new(speed.clone(), 1, vec![]).unwrap();
        assert!(check_relative_degree(&ok, &vf, &samples, 1e-9).unwrap().all_pass);
        let wrong = BarrierChain::new(speed, 2, vec![ClassKappa::linear(1.0).unwrap()]).unwrap();
        let report = check_relative_degree(&wrong, &vf, &samples, 1e-9).unwrap();
        assert!(!report.all_pass);
        assert!(report.samples.iter().all(|s| s.failed_at == Some(0)));
        assert!(check_relative_degree(&ok, &vf, &[], 1e-9).is_err());
    }

    #[test]
    fn class_kappa_validation() {
        assert!(ClassKappa::linear(0.0).is_err());
        assert!(ClassKappa::cubic(-1.0).is_err());
        assert!(ClassKappa::custom(x(0) * 2.0 + x(0).powi(3), 10.0, (-1.0, 1.0)).is_ok());
        // not increasing
        assert!(ClassKappa::custom(x(0).powi(2), 10.0, (-1.0, 1.0)).is_err());
        // α(0) ≠ 0
        assert!(ClassKappa::custom(x(0) + 1.0, 10.0, (-1.0, 1.0)).is_err());
        // Lipschitz bound too small
        assert!(ClassKappa::custom(x(0) * 5.0, 1.0, (-1.0, 1.0)).is_err());
        assert!(BarrierChain::new(obstacle(), 2, vec![]).is_err());
    }

    #[test]
    fn custom_kappa_flows_through_gradients() {
        let alpha = ClassKappa::custom(x(0) + x(0).powi(3), 10.0, (-1.5, 1.5)).unwrap();
        let chain = BarrierChain::new(obstacle(), 2, vec![alpha]).unwrap();
        let vf = unicycle();
        let s = [3.0, 1.0, 0.7, -0.4];
        let (v, g) = terminal_and_grad(&chain, &vf, &s).unwrap();
        let h0 = chain_value(&chain, &vf, 0, &s).unwrap();
        let (lf, lf_grad) = lie_f_grad(chain.h(), &vf, 1, &s).unwrap();
        assert_abs_diff_eq!(v, lf + h0 + h0.powi(3), epsilon = 1e-14);
        let hg = finite_diff_grad(chain.h(), &s, 1e-6).unwrap();
        for i in 0..4 {
            assert!((g[i] - (lf_grad[i] + (1.0 + 3.0 * h0 * h0) * hg[i])).abs() < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn chain_recursion_identity(
            qx in -5.0..5.0f64, qy in -5.0..5.0f64, v in -1.0..3.0f64, th in -3.2..3.2f64,
            k0 in 0.5..20.0f64, k1 in 0.5..5.0f64,
        ) {
            // obstacle-like h with d = 3 chain (artificial, exercises two α levels)
            let vf = unicycle();
            let h = ScalarField::new(4, Expr::norm_p(&[x(0) - 7.0, x(1) - 7.0], 2.0) - 1.0).unwrap();
            let alphas = vec![ClassKappa::linear(k0).unwrap(), ClassKappa::cubic(k1).unwrap()];
            let chain = BarrierChain::new(h, 3, alphas.clone()).unwrap();
            let s = [qx, qy, v, th];
            for i in 0..2 {
                let bi = chain_value(&chain, &vf, i, &s).unwrap();
                let bnext = chain_value(&chain, &vf, i + 1, &s).unwrap();
                // L_f b_i via the gradient of b_i (a separate chain truncated at level i)
                let sub = BarrierChain::new(chain.h().clone(), i + 1, alphas[..i].to_vec()).unwrap();
                let (_, gi) = terminal_and_grad(&sub, &vf, &s).unwrap();
                let lf: f64 = gi.iter().zip(vf.f_at(&s).iter()).map(|(a, b)| a * b).sum();
                let resid = bnext - lf - alphas[i].apply(&bi);
                prop_assert!(resid.abs() <= 1e-10 * bnext.abs().max(1.0), "residual {resid}");
            }
        }
    }
}
