use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;

fn x(i: usize) -> Expr {
    Expr::var(i)
}

fn unicycle() -> VectorFieldPair {
    let (v, th) = (x(2), x(3));
    let z = Expr::zero;
    let one = || Expr::constant(1.0);
    VectorFieldPair::new(
        4,
        2,
        vec![v.clone() * th.cos(), v * th.sin(), z(), z()],
        vec![vec![z(), z()], vec![z(), z()], vec![one(), z()], vec![z(), one()]],
    )
    .unwrap()
}

fn double_integrator(second_drift: f64) -> VectorFieldPair {
    VectorFieldPair::new(
        2,
        1,
        vec![x(1), Expr::constant(second_drift)],
        vec![vec![Expr::zero()], vec![Expr::constant(1.0)]],
    )
    .unwrap()
}

#[test]
fn grad_of_polynomial() {
    let f = ScalarField::new(2, x(0).powi(2) + x(1)).unwrap();
    assert_eq!(grad(&f, &[3.0, 0.0]).unwrap(), vec![6.0, 1.0]);
}

#[test]
fn grad_of_constant_is_zero() {
    let f = ScalarField::new(3, Expr::constant(4.2)).unwrap();
    assert_eq!(grad(&f, &[1.0, -2.0, 0.5]).unwrap(), vec![0.0; 3]);
}

#[test]
fn grad_of_euclidean_norm() {
    let f = ScalarField::new(2, Expr::norm_p(&[x(0), x(1)], 2.0)).unwrap();
    let g = grad(&f, &[3.0, 4.0]).unwrap();
    // frozen from central differences with step 1e-6
    assert_abs_diff_eq!(g[0], 0.6, epsilon = 1e-12);
    assert_abs_diff_eq!(g[1], 0.8, epsilon = 1e-12);
    let fd = finite_diff_grad(&f, &[3.0, 4.0], 1e-6).unwrap();
    assert_abs_diff_eq!(fd[0], g[0], epsilon = 1e-8);
    assert_abs_diff_eq!(fd[1], g[1], epsilon = 1e-8);
}

#[test]
fn grad_rejects_wrong_dimension() {
    let f = ScalarField::new(2, x(0)).unwrap();
    assert!(matches!(grad(&f, &[1.0]), Err(crate::Error::DimensionMismatch { .. })));
    assert!(ScalarField::new(2, x(2)).is_err());
}

#[test]
fn lie_f_double_integrator() {
    let eta = ScalarField::new(2, x(0)).unwrap();
    for state in [[0.0, 0.0], [1.5, -2.0], [-3.0, 7.0]] {
        assert_eq!(lie_f(&eta, &double_integrator(0.0), 2, &state).unwrap(), 0.0);
        assert_eq!(lie_f(&eta, &double_integrator(1.0), 2, &state).unwrap(), 1.0);
        assert_eq!(lie_f(&eta, &double_integrator(1.0), 0, &state).unwrap(), state[0]);
        assert_eq!(lie_f(&eta, &double_integrator(1.0), 1, &state).unwrap(), state[1]);
    }
}

#[test]
fn lie_f_unicycle_position() {
    let qx = ScalarField::new(4, x(0)).unwrap();
    assert_eq!(lie_f(&qx, &unicycle(), 1, &[0.0, 0.0, 2.0, 0.0]).unwrap(), 2.0);
    // L_f² q_x = 0 because v and θ have no drift.
    assert_abs_diff_eq!(lie_f(&qx, &unicycle(), 2, &[0.3, 0.1, 2.0, 0.7]).unwrap(), 0.0, epsilon = 1e-15);
}

#[test]
fn lie_g_of_speed_bound() {
    let h8 = ScalarField::new(4, 9.0 - x(2)).unwrap();
    assert_eq!(lie_g_of(&h8, &unicycle(), 0, &[1.0, 2.0, 3.0, 0.4]).unwrap(), vec![-1.0, 0.0]);
}

#[test]
fn lie_g_of_unactuated_coordinate_vanishes() {
    let qy = ScalarField::new(4, x(1).powi(3)).unwrap();
    assert_eq!(lie_g_of(&qy, &unicycle(), 0, &[1.0, 2.0, 3.0, 0.4]).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn lie_g_of_double_integrator() {
    let eta = ScalarField::new(2, x(0)).unwrap();
    assert_eq!(lie_g_of(&eta, &double_integrator(0.0), 1, &[0.4, -1.0]).unwrap(), vec![1.0]);
}

#[test]
fn lie_g_lie_f_of_obstacle_matches_hand_formula() {
    // h = |q - b| - c: L_g L_f h = (∇h·(cos θ, sin θ), v ∇h·(−sin θ, cos θ)).
    let h = ScalarField::new(4, Expr::norm_p(&[x(0) - 1.0, x(1) + 2.0], 2.0) - 1.5).unwrap();
    let s = [3.0, 1.0, 1.3, 0.4];
    let (dx, dy) = (s[0] - 1.0, s[1] + 2.0);
    let r = (dx * dx + dy * dy).sqrt();
    let (nx, ny) = (dx / r, dy / r);
    let want = [nx * s[3].cos() + ny * s[3].sin(), s[2] * (-nx * s[3].sin() + ny * s[3].cos())];
    let got = lie_g_of(&h, &unicycle(), 1, &s).unwrap();
    assert_abs_diff_eq!(got[0], want[0], epsilon = 1e-14);
    assert_abs_diff_eq!(got[1], want[1], epsilon = 1e-14);
}

#[test]
fn finite_diff_matches_grad_on_trig_product() {
    let f = ScalarField::new(2, x(0).sin() * x(1)).unwrap();
    let p = [0.7, -1.3];
    let g = grad(&f, &p).unwrap();
    let fd = finite_diff_grad(&f, &p, 1e-5).unwrap();
    for i in 0..2 {
        assert!((g[i] - fd[i]).abs() <= 1e-6);
    }
}

#[test]
fn finite_diff_constant_and_quadratic() {
    let c = ScalarField::new(2, Expr::constant(3.0)).unwrap();
    assert!(finite_diff_grad(&c, &[1.0, 2.0], 1e-3).unwrap().iter().all(|v| v.abs() <= 1e-9));
    let q = ScalarField::new(2, 2.0 * x(0).powi(2) - x(0) * x(1) + 0.5 * x(1).powi(2)).unwrap();
    let p = [1.2, -0.4];
    let fd = finite_diff_grad(&q, &p, 1e-3).unwrap();
    let g = grad(&q, &p).unwrap();
    for i in 0..2 {
        assert!((fd[i] - g[i]).abs() <= 1e-9);
    }
    assert!(finite_diff_grad(&q, &p, 0.0).is_err());
}

#[test]
fn atan2_at_origin_is_an_error() {
    let f = ScalarField::new(2, x(1).atan2(&x(0))).unwrap();
    assert!(matches!(grad(&f, &[0.0, 0.0]), Err(crate::Error::NonFinite { .. })));
    let g = grad(&f, &[-1.0, 1e-300]).unwrap();
    // across the branch cut the derivative stays finite: d/dy atan2 = x/(x²+y²)
    assert_abs_diff_eq!(g[1], -1.0, epsilon = 1e-12);
}

#[test]
fn jet_series_of_elementary_functions() {
    // t ↦ 0.5 + t
    let t = Jet::from_coeffs(vec![0.5, 1.0, 0.0, 0.0, 0.0]);
    let fact = |k: usize| (1..=k).product::<usize>() as f64;
    let e = t.exp();
    for k in 0..5 {
        assert_abs_diff_eq!(e.coeffs[k], 0.5f64.exp() / fact(k), epsilon = 1e-15);
    }
    let (s, c) = t.sin_cos();
    let sd = [0.5f64.sin(), 0.5f64.cos(), -0.5f64.sin(), -0.5f64.cos(), 0.5f64.sin()];
    let cd = [0.5f64.cos(), -0.5f64.sin(), -0.5f64.cos(), 0.5f64.sin(), 0.5f64.cos()];
    for k in 0..5 {
        assert_abs_diff_eq!(s.coeffs[k], sd[k] / fact(k), epsilon = 1e-15);
        assert_abs_diff_eq!(c.coeffs[k], cd[k] / fact(k), epsilon = 1e-15);
    }
    // ln(0.5 + t): k-th coefficient (-1)^{k+1} / (k 0.5^k)
    let l = t.ln();
    for k in 1..5 {
        let want = (-1f64).powi(k as i32 + 1) / (k as f64 * 0.5f64.powi(k as i32));
        assert_abs_diff_eq!(l.coeffs[k], want, epsilon = 1e-12);
    }
    // (0.5 + t)^{1.5} via generalized binomial coefficients
    let p = t.powf(1.5);
    let mut binom = 1.0;
    for k in 0..5 {
        assert_abs_diff_eq!(p.coeffs[k], binom * 0.5f64.powf(1.5 - k as f64), epsilon = 1e-13);
        binom *= (1.5 - k as f64) / (k + 1) as f64;
    }
    let r = t.sqrt();
    let q = t.powf(0.5);
    for k in 0..5 {
        assert_abs_diff_eq!(r.coeffs[k], q.coeffs[k], epsilon = 1e-13);
    }
}

#[test]
fn jet_atan2_matches_composition() {
    // atan2(sin(t+a), cos(t+a)) = t + a for a away from the cut
    let a = 2.9;
    let t = Jet::from_coeffs(vec![a, 1.0, 0.0, 0.0]);
    let (s, c) = t.sin_cos();
    let z = s.atan2(&c);
    assert_abs_diff_eq!(z.coeffs[0], a, epsilon = 1e-14);
    assert_abs_diff_eq!(z.coeffs[1], 1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(z.coeffs[2], 0.0, epsilon = 1e-14);
    assert_abs_diff_eq!(z.coeffs[3], 0.0, epsilon = 1e-14);
}

#[test]
fn jet_reproduces_polynomial_coefficients() {
    // p(t) = 1 - 2t + 3t² evaluated through a polynomial expression of degree 3
    let t = Jet::from_coeffs(vec![0.0, 1.0, 0.0, 0.0]);
    let p = t.clone() * t.clone() * t.clone() - t.scale(2.0) + Jet::constant(1.0);
    assert_eq!(p.coeffs, vec![1.0, -2.0, 0.0, 1.0]);
}

#[test]
fn nested_jet_over_dual_matches_hand_lie_gradient() {
    // ∇(L_f q_x) = ∇(v cos θ) = (0, 0, cos θ, -v sin θ)
    let qx = ScalarField::new(4, x(0)).unwrap();
    let s = [0.0, 0.0, 2.0, 0.3];
    let (val, g) = lie_f_grad(&qx, &unicycle(), 1, &s).unwrap();
    assert_abs_diff_eq!(val, 2.0 * 0.3f64.cos(), epsilon = 1e-15);
    assert_abs_diff_eq!(g[2], 0.3f64.cos(), epsilon = 1e-15);
    assert_abs_diff_eq!(g[3], -2.0 * 0.3f64.sin(), epsilon = 1e-15);
}

#[test]
fn expr_substitution_and_display() {
    let e = x(0) * x(1) + x(0).sin();
    let shifted = e.shift_vars(2);
    assert_eq!(shifted.max_var(), Some(3));
    assert_eq!(shifted.eval(&[9.0, 9.0, 2.0, 3.0]), e.eval(&[2.0, 3.0]));
    assert_eq!(format!("{}", Expr::var(1) + 1.0), "(x1 + 1)");
    // folding keeps zero entries cheap
    assert!((Expr::zero() * x(0)).is_zero());
}

fn poly_strategy(n: usize) -> impl Strategy<Value = Vec<(f64, Vec<u8>)>> {
    prop::collection::vec((-2.0..2.0f64, prop::collection::vec(0u8..3, n)), 1..6)
}

fn build_poly(terms: &[(f64, Vec<u8>)]) -> Expr {
    // total degree capped at 4 by trimming exponents
    sum(terms.iter().map(|(c, exps)| {
        let mut budget = 4u8;
        let mut mono = Expr::constant(*c);
        for (i, &e) in exps.iter().enumerate() {
            let e = e.min(budget);
            budget -= e;
            mono = mono * x(i).powi(e as i32);
        }
        mono
    }))
}

fn jet3() -> impl Strategy<Value = Jet<f64>> {
    prop::collection::vec(-3.0..3.0f64, 4).prop_map(Jet::from_coeffs)
}

proptest! {
    #[test]
    fn polynomial_grad_matches_finite_differences(
        n in 1usize..=6,
        seed_terms in poly_strategy(6),
        point in prop::collection::vec(-1.5..1.5f64, 6),
    ) {
        let terms: Vec<_> = seed_terms.into_iter().map(|(c, e)| (c, e[..n].to_vec())).collect();
        let f = ScalarField::new(n, build_poly(&terms)).unwrap();
        let p = &point[..n];
        let g = grad(&f, p).unwrap();
        let fd = finite_diff_grad(&f, p, 1e-5).unwrap();
        for i in 0..n {
            let scale = g[i].abs().max(1.0);
            prop_assert!((g[i] - fd[i]).abs() / scale <= 1e-6, "{} vs {}", g[i], fd[i]);
        }
    }

    #[test]
    fn lie_recursion_holds(
        a in -1.0..1.0f64, b in -1.0..1.0f64, c in 0.2..1.5f64,
        state in prop::collection::vec(-1.0..1.0f64, 3),
        k in 1usize..4,
    ) {
        // smooth nonlinear drift on ℝ³
        let f = vec![
            x(1) * x(2).cos() + a,
            (x(0) * b).sin() - x(2),
            x(0) * x(1) * c + x(2).powi(2) * 0.3,
        ];
        let zero = || Expr::zero();
        let vf = VectorFieldPair::new(3, 1, f, vec![vec![zero()], vec![zero()], vec![Expr::constant(1.0)]]).unwrap();
        let eta = ScalarField::new(3, (x(0) * c).exp() * x(1) + x(2).powi(3) - x(0).atan2(&(x(1) + 3.0))).unwrap();
        let direct = lie_f(&eta, &vf, k, &state).unwrap();
        let (_, inner_grad) = lie_f_grad(&eta, &vf, k - 1, &state).unwrap();
        let drift = vf.f_at(&state);
        let stepped: f64 = inner_grad.iter().zip(drift.iter()).map(|(g, f)| g * f).sum();
        prop_assert!((direct - stepped).abs() <= 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn jet_ring_laws(a in jet3(), b in jet3(), c in jet3()) {
        let close = |p: &Jet<f64>, q: &Jet<f64>| p.coeffs.iter().zip(&q.coeffs)
            .all(|(u, v)| (u - v).abs() <= 1e-12 * (1.0 + u.abs().max(v.abs())));
        let l = (a.clone() * b.clone()) * c.clone();
        let r = a.clone() * (b.clone() * c.clone());
        prop_assert!(close(&l, &r));
        let l = (a.clone() + b.clone()) + c.clone();
        let r = a.clone() + (b.clone() + c.clone());
        prop_assert!(close(&l, &r));
        let l = a.clone() * (b.clone() + c.clone());
        let r = a.clone() * b.clone() + a.clone() * c.clone();
        prop_assert!(close(&l, &r));
        let l = a.clone() * b.clone();
        let r = b * a;
        prop_assert!(close(&l, &r));
    }
}
