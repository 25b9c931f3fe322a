//! Small dense convex QP solver and the multiple-HOCBF baseline controller.
//!
//! Solves  min ½ zᵀHz + qᵀz  s.t.  Gz ≥ lo  with the dual active-set method
//! of Goldfarb and Idnani: start from the unconstrained minimizer, repeatedly
//! add the most violated constraint, and drop constraints whose multipliers
//! would turn negative. A violated constraint that cannot be reached by any
//! primal or dual step proves infeasibility, and the blocking multipliers
//! form a Farkas certificate y ≥ 0 with Gᵀy = 0, loᵀy > 0.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::composer::evaluate_chains;
use crate::error::{check_dim, Error, Result};
use crate::hocbf::{BarrierChain, ClassKappa};
use crate::smoothfield::VectorFieldPair;

#[derive(Clone, Debug)]
pub struct DenseQP {
    pub h: DMatrix<f64>,
    pub q: DVector<f64>,
    /// k×p; rows are constraint normals.
    pub g: DMatrix<f64>,
    pub lo: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QPStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug, Serialize)]
pub struct QPResult {
    pub status: QPStatus,
    pub z: Vec<f64>,
    pub active_set: Vec<usize>,
    /// One multiplier per constraint (zero when inactive).
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    /// Farkas ray for infeasible problems.
    pub certificate: Option<Vec<f64>>,
    pub iterations: usize,
}

impl DenseQP {
    pub fn new(h: DMatrix<f64>, q: DVector<f64>, g: DMatrix<f64>, lo: DVector<f64>) -> Result<Self> {
        let p = q.len();
        check_dim("QP Hessian rows", p, h.nrows())?;
        check_dim("QP Hessian columns", p, h.ncols())?;
        check_dim("QP constraint columns", p, if g.nrows() == 0 { p } else { g.ncols() })?;
        check_dim("QP bounds", g.nrows(), lo.len())?;
        Ok(DenseQP { h, q, g, lo })
    }

    pub fn unconstrained(h: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        let p = q.len();
        DenseQP::new(h, q, DMatrix::zeros(0, p), DVector::zeros(0))
    }

    fn factor(&self) -> Result<Cholesky<f64, Dyn>> {
        let asym = (&self.h - self.h.transpose()).abs().max();
        if asym > 1e-10 * self.h.abs().max().max(1.0) {
            return Err(Error::NotPositiveDefinite { x: vec![] });
        }
        self.h.clone().cholesky().ok_or(Error::NotPositiveDefinite { x: vec![] })
    }

    /// Max of stationarity, primal infeasibility, dual infeasibility and
    /// complementarity violations at (z, y).
    pub fn kkt_residual(&self, z: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let stat = (&self.h * z + &self.q - self.g.transpose() * y).amax();
        let slack = &self.g * z - &self.lo;
        let primal = slack.iter().map(|s| (-s).max(0.0)).fold(0.0, f64::max);
        let dual = y.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        let comp = slack.iter().zip(y.iter()).map(|(s, v)| (s * v).abs()).fold(0.0, f64::max);
        stat.max(primal).max(dual).max(comp)
    }
}

struct ActiveSystem {
    /// Columns H⁻¹ n_j for active j.
    hinv_n: Vec<DVector<f64>>,
}

/// Solves the QP. Errors only when H is not symmetric positive definite or
/// dimensions disagree.
pub fn solve(qp: &DenseQP) -> Result<QPResult> {
    let chol = qp.factor()?;
    let (k, p) = (qp.g.nrows(), qp.q.len());
    let normals: Vec<DVector<f64>> = (0..k).map(|i| qp.g.row(i).transpose()).collect();
    let scale: Vec<f64> = normals.iter().zip(qp.lo.iter()).map(|(n, l)| 1.0 + n.amax() + l.abs()).collect();
    let feas_tol = 1e-12;

    let mut z = -chol.solve(&qp.q);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut sys = ActiveSystem { hinv_n: Vec::new() };
    let max_iter = 20 * (k + p) + 50;
    let mut iterations = 0;

    loop {
        // choose the most violated constraint, lowest index on ties
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..k {
            if active.contains(&i) {
                continue;
            }
            let s = (normals[i].dot(&z) - qp.lo[i]) / scale[i];
            if s < -feas_tol && pick.map_or(true, |(_, best)| s < best) {
                pick = Some((i, s));
            }
        }
        let Some((np, _)) = pick else { break };
        let n_p = &normals[np];
        let hinv_np = chol.solve(n_p);
        let mut u_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                log::warn!("QP active-set iteration limit reached");
                break;
            }
            let q_act = active.len();
            // r solves (NᵀH⁻¹N) r = NᵀH⁻¹ n_p; step = H⁻¹n_p − H⁻¹N r
            let r: DVector<f64> = if q_act == 0 {
                DVector::zeros(0)
            } else {
                let m = DMatrix::from_fn(q_act, q_act, |a, b| normals[active[a]].dot(&sys.hinv_n[b]));
                let rhs = DVector::from_fn(q_act, |a, _| normals[active[a]].dot(&hinv_np));
                match m.clone().cholesky() {
                    Some(c) => c.solve(&rhs),
                    None => m.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(q_act)),
                }
            };
            let mut step = hinv_np.clone();
            for (a, col) in sys.hinv_n.iter().enumerate() {
                step -= col * r[a];
            }
            let curvature = step.dot(n_p);
            let reachable = curvature > 1e-13 * n_p.dot(&hinv_np).max(1e-300);

            // dual step: largest t keeping active multipliers ≥ 0
            let mut t1 = f64::INFINITY;
            let mut blocking = None;
            for a in 0..q_act {
                if r[a] > 1e-300 {
                    let t = u[a] / r[a];
                    if t < t1 {
                        t1 = t;
                        blocking = Some(a);
                    }
                }
            }
            let t2 = if reachable { -(n_p.dot(&z) - qp.lo[np]) / curvature } else { f64::INFINITY };

            if t1.is_infinite() && t2.is_infinite() {
                // n_p = N r with r ≤ 0: y = e_p − Σ r_a e_{active a}
                let mut y = vec![0.0; k];
                y[np] = 1.0;
                for (a, &j) in active.iter().enumerate() {
                    y[j] = -r[a];
                }
                let mut mult = vec![0.0; k];
                for (a, &j) in active.iter().enumerate() {
                    mult[j] = u[a];
                }
                let zf = z.iter().copied().collect();
                return Ok(QPResult {
                    status: QPStatus::Infeasible,
                    z: zf,
                    active_set: active,
                    multipliers: mult,
                    kkt_residual: f64::NAN,
                    certificate: Some(y),
                    iterations,
                });
            }

            let t = t1.min(t2);
            if reachable {
                z += &step * t;
            }
            for a in 0..q_act {
                u[a] -= t * r[a];
            }
            u_p += t;

            if t2 <= t1 {
                active.push(np);
                u.push(u_p);
                sys.hinv_n.push(hinv_np);
                break;
            }
            let drop = blocking.expect("finite dual step has a blocking constraint");
            active.remove(drop);
            u.remove(drop);
            sys.hinv_n.remove(drop);
        }
        if iterations > max_iter {
            break;
        }
    }

    let mut y = DVector::zeros(k);
    for (a, &j) in active.iter().enumerate() {
        y[j] = u[a].max(0.0);
    }
    let kkt = qp.kkt_residual(&z, &y);
    Ok(QPResult {
        status: QPStatus::Optimal,
        z: z.iter().copied().collect(),
        active_set: active,
        multipliers: y.iter().copied().collect(),
        kkt_residual: kkt,
        certificate: None,
        iterations,
    })
}

/// Slack weights at or above this value are treated as hard constraints
/// (the μ → 0 limit), which keeps the Hessian well conditioned.
pub const HARD_SLACK_WEIGHT: f64 = 1e12;

/// Elementwise input bounds lo ≤ u ≤ hi.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct InputBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim("input box", lo.len(), hi.len())?;
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidParameter("input box needs lo < hi in every channel".into()));
        }
        Ok(InputBox { lo, hi })
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        u.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BaselineOutput {
    pub u: Vec<f64>,
    /// μ_j per constraint; zero for hard constraints.
    pub slacks: Vec<f64>,
    pub status: QPStatus,
    pub qp: QPResult,
}

/// Minimizes ‖u − u_d‖² + ½ Σ γ_j μ_j² subject to
/// L_f b_j + L_g b_j u + α_j(b_j) + μ_j b_j ≥ 0 for each terminal chain value
/// b_j and the optional input box.
pub fn multiple_hocbf_control(
    chains: &[BarrierChain],
    vf: &VectorFieldPair,
    u_desired: &[f64],
    input_box: Option<&InputBox>,
    gammas: &[f64],
    alphas: &[ClassKappa],
    x: &[f64],
) -> Result<BaselineOutput> {
    let m = vf.m();
    let l = chains.len();
    check_dim("desired control", m, u_desired.len())?;
    check_dim("slack weights", l, gammas.len())?;
    check_dim("class-K list", l, alphas.len())?;
    if let Some(b) = input_box {
        check_dim("input box", m, b.lo.len())?;
    }
    if gammas.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidParameter("slack weights must be > 0".into()));
    }
    let eval = evaluate_chains(chains, vf, x)?;

    let soft: Vec<usize> = (0..l).filter(|&j| gammas[j] < HARD_SLACK_WEIGHT).collect();
    let p = m + soft.len();
    let mut h = DMatrix::zeros(p, p);
    let mut q = DVector::zeros(p);
    for i in 0..m {
        h[(i, i)] = 2.0;
        q[i] = -2.0 * u_desired[i];
    }
    for (s, &j) in soft.iter().enumerate() {
        h[(m + s, m + s)] = gammas[j];
    }

    let n_box = if input_box.is_some() { 2 * m } else { 0 };
    let mut g = DMatrix::zeros(l + n_box, p);
    let mut lo = DVector::zeros(l + n_box);
    for j in 0..l {
        let b = *eval.levels[j].last().expect("nonempty chain");
        let (lf, lg) = &eval.terminal_lie[j];
        for i in 0..m {
            g[(j, i)] = lg[i];
        }
        if let Some(s) = soft.iter().position(|&sj| sj == j) {
            g[(j, m + s)] = b;
        }
        lo[j] = -lf - alphas[j].apply(&b);
    }
    if let Some(bx) = input_box {
        for i in 0..m {
            g[(l + 2 * i, i)] = 1.0;
            lo[l + 2 * i] = bx.lo[i];
            g[(l + 2 * i + 1, i)] = -1.0;
            lo[l + 2 * i + 1] = -bx.hi[i];
        }
    }
    let qp = DenseQP::new(h, q, g, lo)?;
    let res = solve(&qp)?;
    let mut slacks = vec![0.0; l];
    for (s, &j) in soft.iter().enumerate() {
        slacks[j] = res.z[m + s];
    }
    Ok(BaselineOutput { u: res.z[..m].to_vec(), slacks, status: res.status, qp: res })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::smoothfield::{Expr, ScalarField};

    /// Reference solver: accelerated projected gradient on the dual
    /// max_{y ≥ 0} −½ (Gᵀy − q)ᵀ H⁻¹ (Gᵀy − q) + loᵀy.
    pub(crate) fn dual_projected_gradient(qp: &DenseQP, iters: usize) -> DVector<f64> {
        let hinv = qp.h.clone().try_inverse().unwrap();
        let k = qp.g.nrows();
        if k == 0 {
            return -&hinv * &qp.q;
        }
        let m = &qp.g * &hinv * qp.g.transpose();
        let lip = m.symmetric_eigenvalues().amax().max(1e-12);
        let mut y = DVector::<f64>::zeros(k);
        let mut w = y.clone();
        let mut t = 1.0f64;
        for _ in 0..iters {
            let z = &hinv * (qp.g.transpose() * &w - &qp.q);
            let grad = &qp.lo - &qp.g * &z;
            let y_next = (&w + grad / lip).map(|v| v.max(0.0));
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            w = &y_next + (&y_next - &y) * ((t - 1.0) / t_next);
            y = y_next;
            t = t_next;
        }
        &hinv * (qp.g.transpose() * &y - &qp.q)
    }

    #[test]
    fn unconstrained_minimizer() {
        let qp = DenseQP::unconstrained(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]), DVector::from_vec(vec![-2.0, 4.0]))
            .unwrap();
        let r = solve(&qp).unwrap();
        assert_eq!(r.status, QPStatus::Optimal);
        assert_abs_diff_eq!(r.z[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.z[1], -1.0, epsilon = 1e-15);
        assert!(r.active_set.is_empty());
    }

    #[test]
    fn one_dimensional_bound() {
        let qp = DenseQP::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let r = solve(&qp).unwrap();
        assert_eq!(r.z, vec![1.0]);
        assert_eq!(r.active_set, vec![0]);
        assert_abs_diff_eq!(r.multipliers[0], 1.0, epsilon = 1e-15);
        assert!(r.kkt_residual <= 1e-12);
    }

    #[test]
    fn infeasible_box_yields_certificate() {
        // z ≥ 1 and −z ≥ 0 (z ≤ 0)
        let qp = DenseQP::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![1.0, 0.0]),
        )
        .unwrap();
        let r = solve(&qp).unwrap();
        assert_eq!(r.status, QPStatus::Infeasible);
        let y = DVector::from_vec(r.certificate.unwrap());
        assert!(y.iter().all(|&v| v >= 0.0));
        assert!((qp.g.transpose() * &y).amax() <= 1e-12);
        assert!(qp.lo.dot(&y) > 0.0);
    }

    #[test]
    fn degenerate_duplicate_constraints() {
        let qp = DenseQP::new(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 1.0]),
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]),
            DVector::from_vec(vec![0.5, 0.5, 2.0]),
        )
        .unwrap();
        let r = solve(&qp).unwrap();
        assert_eq!(r.status, QPStatus::Optimal);
        assert!(r.kkt_residual <= 1e-10, "{}", r.kkt_residual);
        let oracle = dual_projected_gradient(&qp, 20000);
        for i in 0..2 {
            assert_abs_diff_eq!(r.z[i], oracle[i], epsilon = 1e-6);
        }
    }

    fn double_integrator() -> (BarrierChain, VectorFieldPair) {
        let x = Expr::vars(2);
        let vf = VectorFieldPair::new(2, 1, vec![x[1].clone(), Expr::zero()], vec![vec![Expr::zero()], vec![Expr::constant(1.0)]])
            .unwrap();
        let lin = ClassKappa::linear(1.0).unwrap();
        (BarrierChain::new(ScalarField::new(2, x[0].clone()).unwrap(), 2, vec![lin]).unwrap(), vf)
    }

    #[test]
    fn baseline_hard_constraint_and_box() {
        let (chain, vf) = double_integrator();
        let lin = [ClassKappa::linear(1.0).unwrap()];
        // far from the wall the desired control passes
        let out = multiple_hocbf_control(&[chain.clone()], &vf, &[-3.0], None, &[1e24], &lin, &[50.0, 0.0]).unwrap();
        assert_abs_diff_eq!(out.u[0], -3.0, epsilon = 1e-12);
        // at x = (1, 0): u + 1 ≥ 0
        let out = multiple_hocbf_control(&[chain.clone()], &vf, &[-3.0], None, &[1e24], &lin, &[1.0, 0.0]).unwrap();
        assert_eq!(out.status, QPStatus::Optimal);
        assert_abs_diff_eq!(out.u[0], -1.0, epsilon = 1e-12);
        let bx = InputBox::new(vec![-0.5], vec![0.5]).unwrap();
        let out = multiple_hocbf_control(&[chain.clone()], &vf, &[-3.0], Some(&bx), &[1e24], &lin, &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(out.u[0], -0.5, epsilon = 1e-12);
        // box below the constraint: infeasible when hard, slack absorbs it when soft
        let bx = InputBox::new(vec![-3.0], vec![-2.0]).unwrap();
        let out = multiple_hocbf_control(&[chain.clone()], &vf, &[-3.0], Some(&bx), &[1e24], &lin, &[1.0, 0.0]).unwrap();
        assert_eq!(out.status, QPStatus::Infeasible);
        let out = multiple_hocbf_control(&[chain], &vf, &[-3.0], Some(&bx), &[10.0], &lin, &[1.0, 0.0]).unwrap();
        assert_eq!(out.status, QPStatus::Optimal);
        assert_abs_diff_eq!(out.u[0], -2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(out.slacks[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn non_spd_hessian_is_an_error() {
        let qp = DenseQP::unconstrained(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), DVector::zeros(2)).unwrap();
        assert!(solve(&qp).is_err());
    }

    fn random_qp(seed: &[f64], p: usize, k: usize) -> DenseQP {
        let mut it = seed.iter().cycle().copied();
        let mut next = move || it.next().unwrap();
        let a = DMatrix::from_fn(p, p, |_, _| next());
        let h = &a * a.transpose() + DMatrix::identity(p, p) * 0.5;
        let q = DVector::from_fn(p, |_, _| next() * 3.0);
        let g = DMatrix::from_fn(k, p, |_, _| next());
        // feasible by construction: lo below G z0 for a z0
        let z0 = DVector::from_fn(p, |_, _| next());
        let lo = &g * &z0 - DVector::from_fn(k, |_, _| next().abs());
        DenseQP::new(h, q, g, lo).unwrap()
    }

    proptest! {
        #[test]
        fn matches_projected_gradient_oracle(
            p in 1usize..=6, k in 0usize..=8,
            seed in prop::collection::vec(-1.0..1.0f64, 97),
        ) {
            let qp = random_qp(&seed, p, k);
            let r = solve(&qp).unwrap();
            prop_assert_eq!(r.status, QPStatus::Optimal);
            prop_assert!(r.kkt_residual <= 1e-8, "kkt {}", r.kkt_residual);
            let oracle = dual_projected_gradient(&qp, 40000);
            for i in 0..p {
                prop_assert!((r.z[i] - oracle[i]).abs() <= 1e-6, "{} vs {}", r.z[i], oracle[i]);
            }
        }

        #[test]
        fn infeasible_instances_carry_valid_certificates(
            p in 1usize..=4,
            seed in prop::collection::vec(-1.0..1.0f64, 40),
            gap in 0.1..2.0f64,
        ) {
            // a·z ≥ c and −a·z ≥ −c + gap cannot both hold
            let a = DVector::from_fn(p, |i, _| seed[i] + if i == 0 { 2.0 } else { 0.0 });
            let mut g = DMatrix::zeros(3, p);
            g.set_row(0, &a.transpose());
            g.set_row(1, &(-&a).transpose());
            g.set_row(2, &DVector::from_fn(p, |i, _| seed[10 + i]).transpose());
            let lo = DVector::from_vec(vec![seed[20], -seed[20] + gap, -5.0]);
            let qp = DenseQP::new(DMatrix::identity(p, p), DVector::from_fn(p, |i, _| seed[30 + i]), g, lo).unwrap();
            let r = solve(&qp).unwrap();
            prop_assert_eq!(r.status, QPStatus::Infeasible);
            let y = DVector::from_vec(r.certificate.unwrap());
            prop_assert!(y.iter().all(|&v| v >= -1e-12));
            prop_assert!((qp.g.transpose() * &y).amax() <= 1e-9);
            prop_assert!(qp.lo.dot(&y) > 0.0);
        }
    }
}
