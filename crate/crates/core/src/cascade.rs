//! Input constraints through controller dynamics.
//!
//! The plant control becomes the output of an auxiliary system
//! ẋ_c = f_c(x_c) + g_c(x_c) û, u = h_c(x_c). Input constraints φ_κ(u) ≥ 0
//! are then state constraints on the cascade x̂ = (x, x_c), and the soft-min
//! filter acts on the surrogate control û.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::composer::{CompositeEval, CompositeRCBF};
use crate::controller::{solve_closed_form, CostAt, QuadraticCost, SafeFilterOutput, SafeFilterParams};
use crate::error::{check_dim, Error, Result};
use crate::hocbf::{lie_g_norms, norm, BarrierChain, ClassKappa};
use crate::smoothfield::{flow_series, Dual, Expr, Scalar, ScalarField, VectorFieldPair};

/// Largest condition number accepted for L_{g_c} L_{f_c}^{d_c−1} h_c.
pub const MAX_INPUT_MAP_CONDITION: f64 = 1e12;

/// ẋ_c = f_c(x_c) + g_c(x_c) û,  u = h_c(x_c).
#[derive(Clone, Debug)]
pub struct ControlDynamics {
    vf: VectorFieldPair,
    h_c: Vec<Expr>,
    d_c: usize,
}

/// Linear controller dynamics ẋ_c = A x_c + B û, u = C x_c.
#[derive(Clone, Debug)]
pub struct LTILowPass {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

fn linear_map(mat: &DMatrix<f64>, vars: &[Expr]) -> Vec<Expr> {
    (0..mat.nrows())
        .map(|i| crate::smoothfield::sum((0..mat.ncols()).map(|j| vars[j].clone() * mat[(i, j)])))
        .collect()
}

impl ControlDynamics {
    pub fn new(f_c: Vec<Expr>, g_c: Vec<Vec<Expr>>, h_c: Vec<Expr>, d_c: usize) -> Result<Self> {
        let n_c = f_c.len();
        let m = h_c.len();
        if n_c == 0 || m == 0 {
            return Err(Error::Empty("controller dynamics"));
        }
        if d_c == 0 {
            return Err(Error::InvalidParameter("controller relative degree must be ≥ 1".into()));
        }
        let vf = VectorFieldPair::new(n_c, m, f_c, g_c)?;
        ScalarField::new(n_c, crate::smoothfield::sum(h_c.iter().cloned()))?;
        Ok(ControlDynamics { vf, h_c, d_c })
    }

    /// Requires C·B nonsingular, which gives relative degree 1.
    pub fn lti(sys: &LTILowPass) -> Result<Self> {
        let n_c = sys.a.nrows();
        check_dim("A_c columns", n_c, sys.a.ncols())?;
        check_dim("B_c rows", n_c, sys.b.nrows())?;
        check_dim("C_c columns", n_c, sys.c.ncols())?;
        let m = sys.b.ncols();
        check_dim("C_c rows", m, sys.c.nrows())?;
        let cb = &sys.c * &sys.b;
        let cond = condition_number(&cb);
        if !(cond < MAX_INPUT_MAP_CONDITION) {
            return Err(Error::SingularControlDynamics { x_c: vec![0.0; n_c], condition: cond });
        }
        let xs = Expr::vars(n_c);
        let f_c = linear_map(&sys.a, &xs);
        let g_c = (0..n_c).map(|i| (0..m).map(|j| Expr::constant(sys.b[(i, j)])).collect()).collect();
        let h_c = linear_map(&sys.c, &xs);
        ControlDynamics::new(f_c, g_c, h_c, 1)
    }

    pub fn n_c(&self) -> usize {
        self.vf.n()
    }

    pub fn m(&self) -> usize {
        self.h_c.len()
    }

    pub fn d_c(&self) -> usize {
        self.d_c
    }

    pub fn vf(&self) -> &VectorFieldPair {
        &self.vf
    }

    pub fn h_c(&self) -> &[Expr] {
        &self.h_c
    }

    /// u = h_c(x_c).
    pub fn output(&self, x_c: &[f64]) -> Vec<f64> {
        self.h_c.iter().map(|e| e.eval(x_c)).collect()
    }

    /// L_{f_c}^i h_c(x_c) for i = 0..=order, one vector per i.
    pub fn output_lie(&self, x_c: &[f64], order: usize) -> Vec<Vec<f64>> {
        let flow = self.vf.flow(x_c, order);
        let series: Vec<_> = self.h_c.iter().map(|e| e.eval(&flow)).collect();
        (0..=order).map(|i| series.iter().map(|s| s.derivative_at_zero(i)).collect()).collect()
    }

    /// L_{g_c} L_{f_c}^{d_c−1} h_c(x_c), an m×m matrix.
    pub fn input_matrix(&self, x_c: &[f64]) -> DMatrix<f64> {
        let rows = self.lie_g_rows(x_c);
        let m = self.m();
        DMatrix::from_fn(m, m, |i, j| rows[i][self.d_c - 1][j])
    }

    /// For each output k: L_{g_c} L_{f_c}^i h_{c,k} for i = 0..d_c−1.
    fn lie_g_rows(&self, x_c: &[f64]) -> Vec<Vec<Vec<f64>>> {
        self.h_c.iter().map(|e| lie_g_norms(e, &self.vf, x_c, self.d_c)).collect()
    }

    /// Numerical check of the controller relative-degree condition.
    pub fn check_c1(&self, samples: &[Vec<f64>], tol: f64) -> Result<C1Report> {
        if samples.is_empty() {
            return Err(Error::Empty("sample set"));
        }
        let mut out = Vec::with_capacity(samples.len());
        for x_c in samples {
            check_dim("controller state", self.n_c(), x_c.len())?;
            let rows = self.lie_g_rows(x_c);
            let lower = rows
                .iter()
                .flat_map(|r| r[..self.d_c - 1].iter().map(|v| norm(v)))
                .fold(0.0, f64::max);
            let condition = condition_number(&self.input_matrix(x_c));
            let pass = lower <= tol && condition < MAX_INPUT_MAP_CONDITION;
            out.push(C1Sample { x_c: x_c.clone(), lower_max: lower, condition, pass });
        }
        let all_pass = out.iter().all(|s| s.pass);
        Ok(C1Report { samples: out, all_pass })
    }

    /// RK4 step of the controller state under a held surrogate input.
    pub fn step(&self, x_c: &[f64], u_hat: &[f64], dt: f64) -> Vec<f64> {
        step_controller(self, x_c, u_hat, dt)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct C1Sample {
    pub x_c: Vec<f64>,
    pub lower_max: f64,
    pub condition: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct C1Report {
    pub samples: Vec<C1Sample>,
    pub all_pass: bool,
}

pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Admissible inputs {u : φ_κ(u) ≥ 0 for all κ}, each φ_κ of relative
/// degree ζ through the cascade.
#[derive(Clone, Debug)]
pub struct InputConstraintSpec {
    pub phis: Vec<ScalarField>,
    pub zeta: usize,
}

impl InputConstraintSpec {
    pub fn new(phis: Vec<ScalarField>, zeta: usize) -> Result<Self> {
        if zeta == 0 {
            return Err(Error::InvalidParameter("input-constraint relative degree must be ≥ 1".into()));
        }
        if let Some(first) = phis.first() {
            for p in &phis {
                check_dim("input constraint", first.dim(), p.dim())?;
            }
        }
        Ok(InputConstraintSpec { phis, zeta })
    }

    /// hi_i − u_i ≥ 0 and u_i − lo_i ≥ 0 for every channel.
    pub fn box_bounds(lo: &[f64], hi: &[f64], zeta: usize) -> Result<Self> {
        check_dim("input bounds", lo.len(), hi.len())?;
        let m = lo.len();
        let mut phis = Vec::with_capacity(2 * m);
        for i in 0..m {
            if !(lo[i] < hi[i]) {
                return Err(Error::InvalidParameter(format!("input bound {i}: need lo < hi")));
            }
            phis.push(ScalarField::new(m, hi[i] - Expr::var(i))?);
            phis.push(ScalarField::new(m, Expr::var(i) - lo[i])?);
        }
        InputConstraintSpec::new(phis, zeta)
    }

    pub fn values(&self, u: &[f64]) -> Vec<f64> {
        self.phis.iter().map(|p| p.expr().eval(u)).collect()
    }

    /// Whether every φ′_κ is nonzero at each sampled input.
    pub fn gradients_nonzero(&self, samples: &[Vec<f64>], tol: f64) -> Result<bool> {
        for u in samples {
            for p in &self.phis {
                if norm(&crate::smoothfield::grad(p, u)?) <= tol {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// The cascade x̂ = (x, x_c) with
/// f̂ = [f(x) + g(x) h_c(x_c); f_c(x_c)],  ĝ = [0; g_c(x_c)].
#[derive(Clone, Debug)]
pub struct CascadePlant {
    base: VectorFieldPair,
    ctrl: ControlDynamics,
    combined: VectorFieldPair,
}

impl CascadePlant {
    pub fn new(base: VectorFieldPair, ctrl: ControlDynamics) -> Result<Self> {
        check_dim("controller output", base.m(), ctrl.m())?;
        let (n, m, n_c) = (base.n(), base.m(), ctrl.n_c());
        let u: Vec<Expr> = ctrl.h_c.iter().map(|e| e.shift_vars(n)).collect();
        let mut f_hat = Vec::with_capacity(n + n_c);
        for i in 0..n {
            let drive = crate::smoothfield::sum((0..m).map(|j| base.g_expr(i, j).clone() * u[j].clone()));
            f_hat.push(base.f_exprs()[i].clone() + drive);
        }
        f_hat.extend(ctrl.vf.f_exprs().iter().map(|e| e.shift_vars(n)));
        let mut g_hat: Vec<Vec<Expr>> = (0..n).map(|_| vec![Expr::zero(); m]).collect();
        g_hat.extend(ctrl.vf.g_rows().into_iter().map(|r| r.iter().map(|e| e.shift_vars(n)).collect()));
        let combined = VectorFieldPair::new(n + n_c, m, f_hat, g_hat)?;
        Ok(CascadePlant { base, ctrl, combined })
    }

    pub fn base(&self) -> &VectorFieldPair {
        &self.base
    }

    pub fn ctrl(&self) -> &ControlDynamics {
        &self.ctrl
    }

    pub fn combined(&self) -> &VectorFieldPair {
        &self.combined
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn split<'a>(&self, x_hat: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        x_hat.split_at(self.base.n())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HatSource {
    /// Wraps safety function `index` whose own relative degree is `base_degree`.
    Safety { index: usize, base_degree: usize },
    /// Wraps input constraint `index` composed with h_c.
    Input { index: usize },
}

/// Hat constraints with the provenance of each chain.
#[derive(Clone, Debug)]
pub struct HatConstraints {
    pub chains: Vec<BarrierChain>,
    pub sources: Vec<HatSource>,
}

/// ĥ_j(x̂) = h_j(x) with degree d_j + d_c, followed by
/// ĥ_{ℓ+κ}(x̂) = φ_κ(h_c(x_c)) with degree ζ. `alphas[ĵ]` must hold the
/// d̂_ĵ − 1 class-K functions of chain ĵ.
pub fn build_hat_constraints(
    safety: &[BarrierChain],
    spec: &InputConstraintSpec,
    plant: &CascadePlant,
    alphas: &[Vec<ClassKappa>],
) -> Result<HatConstraints> {
    let n = plant.n();
    let n_hat = plant.combined.n();
    let d_c = plant.ctrl.d_c;
    let total = safety.len() + spec.phis.len();
    if alphas.len() != total {
        return Err(Error::InvalidParameter(format!(
            "class-K table has {} rows for {total} hat constraints",
            alphas.len()
        )));
    }
    let mut chains = Vec::with_capacity(total);
    let mut sources = Vec::with_capacity(total);
    for (j, c) in safety.iter().enumerate() {
        check_dim("safety constraint", n, c.h().dim())?;
        let degree = c.degree() + d_c;
        if alphas[j].len() != degree - 1 {
            return Err(Error::InvalidParameter(format!(
                "hat constraint {j} (degree {degree}) needs {} class-K functions, got {}",
                degree - 1,
                alphas[j].len()
            )));
        }
        chains.push(BarrierChain::new(c.h().lifted(n_hat)?, degree, alphas[j].clone())?);
        sources.push(HatSource::Safety { index: j, base_degree: c.degree() });
    }
    let u: Vec<Expr> = plant.ctrl.h_c.iter().map(|e| e.shift_vars(n)).collect();
    for (k, phi) in spec.phis.iter().enumerate() {
        check_dim("input constraint", plant.ctrl.m(), phi.dim())?;
        let row = safety.len() + k;
        if alphas[row].len() != spec.zeta - 1 {
            return Err(Error::InvalidParameter(format!(
                "hat constraint {row} (degree {}) needs {} class-K functions, got {}",
                spec.zeta,
                spec.zeta - 1,
                alphas[row].len()
            )));
        }
        let expr = phi.expr().substitute(&|i| u[i].clone());
        chains.push(BarrierChain::new(ScalarField::new(n_hat, expr)?, spec.zeta, alphas[row].clone())?);
        sources.push(HatSource::Input { index: k });
    }
    Ok(HatConstraints { chains, sources })
}

#[derive(Clone, Debug, Serialize)]
pub struct CascadeDegreeSample {
    pub chain: usize,
    pub x_hat: Vec<f64>,
    /// max_i ‖L_ĝ L_f̂^i ĥ‖ over i ≤ d̂ − 2.
    pub lower_max: f64,
    pub terminal_norm: f64,
    /// ‖L_ĝ L_f̂^{d̂−1} ĥ_j − [L_g L_f^{d_j−1} h_j]·L_{g_c} L_{f_c}^{d_c−1} h_c‖ for safety chains.
    pub product_residual: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CascadeDegreeReport {
    pub tol: f64,
    pub samples: Vec<CascadeDegreeSample>,
    pub max_lower: f64,
    pub min_terminal: f64,
    pub max_product_residual: f64,
    pub all_pass: bool,
}

pub fn verify_cascade_relative_degree(
    plant: &CascadePlant,
    hat: &HatConstraints,
    samples: &[Vec<f64>],
    tol: f64,
) -> Result<CascadeDegreeReport> {
    if samples.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let n = plant.n();
    let mut out = Vec::new();
    for x_hat in samples {
        check_dim("cascade state", plant.combined.n(), x_hat.len())?;
        let (x, x_c) = plant.split(x_hat);
        let input_map = plant.ctrl.input_matrix(x_c);
        for (idx, (chain, source)) in hat.chains.iter().zip(&hat.sources).enumerate() {
            let d = chain.degree();
            let rows = lie_g_norms(chain.h().expr(), &plant.combined, x_hat, d);
            let lower_max = rows[..d - 1].iter().map(|r| norm(r)).fold(0.0, f64::max);
            let terminal = &rows[d - 1];
            let terminal_norm = norm(terminal);
            let product_residual = match source {
                HatSource::Safety { base_degree, .. } => {
                    let base_field = ScalarField::new(n, chain.h().expr().clone())?;
                    let base_rows = lie_g_norms(base_field.expr(), &plant.base, x, *base_degree);
                    let lead = DMatrix::from_row_slice(1, plant.base.m(), &base_rows[base_degree - 1]);
                    let predicted = lead * &input_map;
                    let diff: Vec<f64> = terminal.iter().zip(predicted.iter()).map(|(a, b)| a - b).collect();
                    Some(norm(&diff))
                }
                HatSource::Input { .. } => None,
            };
            let pass = lower_max <= tol && terminal_norm > tol && product_residual.is_none_or(|r| r <= tol);
            out.push(CascadeDegreeSample {
                chain: idx,
                x_hat: x_hat.clone(),
                lower_max,
                terminal_norm,
                product_residual,
                pass,
            });
        }
    }
    let max_lower = out.iter().map(|s| s.lower_max).fold(0.0, f64::max);
    let min_terminal = out.iter().map(|s| s.terminal_norm).fold(f64::INFINITY, f64::min);
    let max_product_residual = out.iter().filter_map(|s| s.product_residual).fold(0.0, f64::max);
    let all_pass = out.iter().all(|s| s.pass);
    Ok(CascadeDegreeReport { tol, samples: out, max_lower, min_terminal, max_product_residual, all_pass })
}

/// Feedback-linearizing gains σ_0..σ_{d_c−1} and the cost defining u_d.
#[derive(Clone, Debug)]
pub struct SurrogateLaw {
    sigmas: Vec<f64>,
    cost: QuadraticCost,
}

impl SurrogateLaw {
    pub fn new(sigmas: Vec<f64>, cost: QuadraticCost) -> Result<Self> {
        if sigmas.is_empty() || sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidParameter("surrogate gains must be positive".into()));
        }
        // companion matrix of s^d + σ_{d−1}s^{d−1} + … + σ_0
        let d = sigmas.len();
        let comp = DMatrix::from_fn(d, d, |i, j| {
            if i + 1 == j {
                1.0
            } else if i == d - 1 {
                -sigmas[j]
            } else {
                0.0
            }
        });
        let stable = comp.complex_eigenvalues().iter().all(|z| z.re < 0.0);
        if !stable {
            return Err(Error::InvalidParameter(format!("surrogate polynomial with gains {sigmas:?} is not Hurwitz")));
        }
        Ok(SurrogateLaw { sigmas, cost })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn cost(&self) -> &QuadraticCost {
        &self.cost
    }
}

/// u_d(x̂) = −Q(x)⁻¹c(x).
pub fn u_desired(cost: &QuadraticCost, x_hat: &[f64]) -> Result<Vec<f64>> {
    let at = cost.at(x_hat)?;
    Ok(at.minimizer(x_hat)?.iter().copied().collect())
}

/// Desired surrogate control: the û that makes e = u − u_d obey
/// e^{(d_c)} + Σ σ_i e^{(i)} = 0.
pub fn surrogate_desired(law: &SurrogateLaw, plant: &CascadePlant, x_hat: &[f64]) -> Result<Vec<f64>> {
    check_dim("cascade state", plant.combined.n(), x_hat.len())?;
    let d_c = plant.ctrl.d_c;
    check_dim("surrogate gains", d_c, law.sigmas.len())?;
    let m = plant.ctrl.m();
    let (_, x_c) = plant.split(x_hat);

    let flow = plant.combined.flow(x_hat, d_c);
    let ud = law
        .cost
        .desired_generic(&flow)
        .ok_or_else(|| Error::NotPositiveDefinite { x: x_hat.to_vec() })?;
    let out = plant.ctrl.output_lie(x_c, d_c);

    let mut rhs = DVector::zeros(m);
    for k in 0..m {
        let mut v = ud[k].derivative_at_zero(d_c) - out[d_c][k];
        for (i, s) in law.sigmas.iter().enumerate() {
            v += s * (ud[k].derivative_at_zero(i) - out[i][k]);
        }
        rhs[k] = v;
    }
    let map = plant.ctrl.input_matrix(x_c);
    let condition = condition_number(&map);
    if !(condition < MAX_INPUT_MAP_CONDITION) {
        return Err(Error::SingularControlDynamics { x_c: x_c.to_vec(), condition });
    }
    let sol = map
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularControlDynamics { x_c: x_c.to_vec(), condition })?;
    let sol: Vec<f64> = sol.iter().copied().collect();
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "desired surrogate control".into(), x: x_hat.to_vec() });
    }
    Ok(sol)
}

#[derive(Clone, Debug, Serialize)]
pub struct SurrogateOutput {
    pub filter: SafeFilterOutput,
    pub u_hat_desired: Vec<f64>,
}

/// Closed-form surrogate filter with Q = I and c = −û_d.
pub fn surrogate_filter(
    law: &SurrogateLaw,
    plant: &CascadePlant,
    hat_rcbf: &CompositeRCBF,
    params: &SafeFilterParams,
    x_hat: &[f64],
) -> Result<SafeFilterOutput> {
    Ok(surrogate_filter_with_desired(law, plant, hat_rcbf, params, x_hat)?.filter)
}

pub fn surrogate_filter_with_desired(
    law: &SurrogateLaw,
    plant: &CascadePlant,
    hat_rcbf: &CompositeRCBF,
    params: &SafeFilterParams,
    x_hat: &[f64],
) -> Result<SurrogateOutput> {
    check_dim("hat barrier dynamics", plant.combined.n(), hat_rcbf.vf().n())?;
    let eval = hat_rcbf.evaluate(x_hat)?;
    surrogate_filter_from_eval(law, plant, &eval, params, x_hat)
}

/// Same as [`surrogate_filter_with_desired`] with the hat barrier already evaluated.
pub fn surrogate_filter_from_eval(
    law: &SurrogateLaw,
    plant: &CascadePlant,
    eval: &CompositeEval,
    params: &SafeFilterParams,
    x_hat: &[f64],
) -> Result<SurrogateOutput> {
    let u_hat_desired = surrogate_desired(law, plant, x_hat)?;
    let cost = CostAt { q: None, c: -DVector::from_column_slice(&u_hat_desired) };
    let filter = solve_closed_form(&cost, eval.lf_h, &eval.lg_h, eval.h, params, x_hat)?;
    Ok(SurrogateOutput { filter, u_hat_desired })
}

/// One RK4 step of ẋ_c = f_c(x_c) + g_c(x_c) û with û held.
pub fn step_controller(ctrl: &ControlDynamics, x_c: &[f64], u_hat: &[f64], dt: f64) -> Vec<f64> {
    rk4(|s| ctrl.vf.velocity(s, u_hat).iter().copied().collect(), x_c, dt)
}

/// One classical fourth-order Runge–Kutta step of ẋ = rate(x).
pub fn rk4(rate: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], dt: f64) -> Vec<f64> {
    let add = |a: &[f64], k: &[f64], s: f64| a.iter().zip(k).map(|(a, k)| a + s * k).collect::<Vec<f64>>();
    let k1 = rate(x);
    let k2 = rate(&add(x, &k1, dt / 2.0));
    let k3 = rate(&add(x, &k2, dt / 2.0));
    let k4 = rate(&add(x, &k3, dt));
    (0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

/// A controller state with h_c(x_c) = u_d(x̂), so tracking starts exact
/// (d_c = 1 only). Uses Gauss–Newton on the least-norm correction.
pub fn matched_controller_state(plant: &CascadePlant, cost: &QuadraticCost, x: &[f64]) -> Result<Vec<f64>> {
    let ctrl = &plant.ctrl;
    if ctrl.d_c != 1 {
        return Err(Error::InvalidParameter("matched initialization is implemented for d_c = 1".into()));
    }
    check_dim("plant state", plant.n(), x.len())?;
    let target = cost.at(x)?.minimizer(x)?;
    let n_c = ctrl.n_c();
    let mut x_c = vec![0.0; n_c];
    for _ in 0..50 {
        let seeded = Dual::seed(&x_c);
        let outs: Vec<Dual> = ctrl.h_c.iter().map(|e| e.eval(&seeded)).collect();
        let resid = DVector::from_fn(ctrl.m(), |k, _| outs[k].value - target[k]);
        if resid.amax() <= 1e-14 * (1.0 + target.amax()) {
            break;
        }
        let jac = DMatrix::from_fn(ctrl.m(), n_c, |k, i| outs[k].gradient(n_c)[i]);
        let step = jac
            .clone()
            .pseudo_inverse(1e-14)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            * resid;
        for i in 0..n_c {
            x_c[i] -= step[i];
        }
    }
    Ok(x_c)
}

/// Evaluates u_d along the cascade with any scalar (exposed for tests).
pub fn u_desired_generic<S: Scalar>(cost: &QuadraticCost, x_hat: &[S]) -> Option<Vec<S>> {
    cost.desired_generic(x_hat)
}

/// Taylor series of the controller flow (exposed for oracles).
pub fn controller_flow(ctrl: &ControlDynamics, x_c: &[f64], order: usize) -> Vec<crate::smoothfield::Jet<f64>> {
    flow_series(ctrl.vf.f_exprs(), x_c, order)
}
