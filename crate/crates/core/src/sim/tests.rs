use super::*;
use crate::cascade::rk4;
use approx::assert_relative_eq;
use proptest::prelude::*;
use std::f64::consts::PI;

const EXAMPLE1: &str = include_str!("../../../../scenarios/example1.toml");
const EXAMPLE3: &str = include_str!("../../../../scenarios/example3.toml");
const EXAMPLE3_BASELINE: &str = include_str!("../../../../scenarios/example3_baseline.toml");

fn scenario(text: &str) -> Scenario {
    Scenario::from_toml_str(text).unwrap()
}

fn gains() -> Gains {
    Gains { k1: 0.2, k2: 1.0, k3: 2.0 }
}

#[test]
fn desired_control_aligned_approach_has_no_turn() {
    let (goal, r) = ([3.0, 4.5], 2.5);
    let u = desired_control_at(&gains(), goal, &[goal[0] + r, goal[1], 0.0, PI]);
    assert!(u[1].abs() < 1e-12);
    assert_relative_eq!(u[0], (1.0 + 0.2 * 2.0) * r, epsilon = 1e-12);
}

#[test]
fn desired_control_quarter_turn_from_rest() {
    let (goal, r) = ([-1.0, 2.0], 3.0);
    let u = desired_control_at(&gains(), goal, &[goal[0] + r, goal[1], 0.0, PI / 2.0]);
    assert_relative_eq!(u[0], 0.2 * 1.0 * r, epsilon = 1e-12);
    assert_relative_eq!(u[1], 1.0, epsilon = 1e-12);
}

#[test]
fn desired_control_matches_independent_evaluation() {
    // values from a 30-digit re-implementation of the control law
    let u = desired_control_at(&gains(), [3.0, 4.5], &[-1.0, -8.5, 0.0, PI / 2.0]);
    assert_relative_eq!(u[0], 18.4352686790700184794815989167, max_relative = 1e-12);
    assert_relative_eq!(u[1], -0.294085848837523099351998645882, max_relative = 1e-12);
    let u = desired_control_at(&gains(), [3.0, 4.5], &[2.5, -1.25, 1.5, 0.3]);
    assert_relative_eq!(u[0], 0.995122921500412680871935013507, max_relative = 1e-12);
    assert_relative_eq!(u[1], 1.16683872972278377601786300269, max_relative = 1e-12);
}

#[test]
fn desired_control_is_finite_next_to_the_goal() {
    let u = desired_control_at(&gains(), [1.0, 1.0], &[1.0 + 1e-12, 1.0, 0.7, 0.4]);
    assert!(u.iter().all(|v| v.is_finite()));
    assert!(u[1].abs() <= (0.7 / GOAL_DISTANCE_FLOOR + 1.0) * (1.0 + 1e-12));
}

#[test]
fn map_constraint_order_and_degrees() {
    let map = scenario(EXAMPLE1).map_spec();
    let kinds: Vec<ConstraintKind> = map.constraints().iter().map(|(k, _)| *k).collect();
    assert_eq!(kinds.len(), 9);
    assert!(kinds[..6].iter().all(|k| *k == ConstraintKind::Obstacle));
    assert_eq!(&kinds[6..], &[ConstraintKind::Wall, ConstraintKind::SpeedMax, ConstraintKind::SpeedMin]);
    assert_eq!(ConstraintKind::Wall.base_degree(), 2);
    assert_eq!(ConstraintKind::SpeedMin.base_degree(), 1);
    // speed limits 9 − v and v + 1 at rest
    assert_relative_eq!(map.min_safety(&[-1.0, -8.5, 0.0, 0.0]), 1.0, epsilon = 1e-12);
}

#[test]
fn zero_input_keeps_state_and_barrier_constant() {
    let lp = ClosedLoop::new(&scenario(EXAMPLE1)).unwrap();
    let x = vec![-1.0, -8.5, 0.0, PI / 2.0];
    let h0 = lp.rcbf().h_value(&x).unwrap();
    let hold = ControlStep {
        u: vec![0.0, 0.0],
        u_hat: vec![],
        u_desired: vec![0.0, 0.0],
        mu: 0.0,
        h: h0,
        min_b: 0.0,
        min_h: 0.0,
        min_phi: None,
        feasible: true,
    };
    let mut s = x.clone();
    for _ in 0..50 {
        s = lp.advance(&s, &hold, 0.025, 4);
        assert_eq!(s, x);
        assert_eq!(lp.rcbf().h_value(&s).unwrap(), h0);
    }
}

#[test]
fn rk4_observed_order_on_unicycle() {
    let plant = UnicyclePlant::dynamics();
    let u = [0.3, 0.5];
    let x0 = [0.0, 0.0, 1.0, 0.2];
    let integrate = |n: usize| {
        let h = 1.0 / n as f64;
        let mut s = x0.to_vec();
        for _ in 0..n {
            s = rk4(|z| plant.velocity(z, &u).iter().copied().collect(), &s, h);
        }
        s
    };
    let reference = integrate(2048);
    let err = |n: usize| integrate(n).iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (e1, e2) = (err(8), err(16));
    assert!((e1 / e2).log2() >= 3.5, "observed order {}", (e1 / e2).log2());
}

#[test]
fn example1_reaches_goal_safely() {
    let out = run(&scenario(EXAMPLE1)).unwrap();
    let s = &out.summary;
    assert_eq!(s.status, RunStatus::GoalReached);
    assert!(s.min_h >= 0.0 && s.min_composite_h >= 0.0);
    assert!(s.final_distance <= 0.2 && s.final_time < 60.0);
    // uniform control-period timestamps
    for (k, r) in out.log.rows.iter().enumerate() {
        assert_relative_eq!(r.t, k as f64 / 40.0, epsilon = 1e-12);
    }
}

#[test]
fn example3_baseline_collides_near_reported_time() {
    let out = run(&scenario(EXAMPLE3_BASELINE)).unwrap();
    let t = out.summary.first_violation_time.expect("baseline collides");
    assert!((0.8..=2.0).contains(&t), "first violation at {t}");
    assert!(out.log.rows.iter().any(|r| r.status == RunStatus::SafetyViolation));
    // the box is enforced as hard bounds
    assert!(out.summary.min_phi.unwrap() >= -1e-9);
}

#[test]
fn example3_cascade_respects_state_and_input_constraints() {
    let out = run(&scenario(EXAMPLE3)).unwrap();
    let s = &out.summary;
    assert_eq!(s.status, RunStatus::GoalReached);
    assert!(s.min_h >= -SAFETY_TOL);
    assert!(s.min_phi.unwrap() >= -SAFETY_TOL);
    assert!(s.max_abs_u[0] <= 2.0 + SAFETY_TOL && s.max_abs_u[1] <= 1.0 + SAFETY_TOL);
    assert_eq!(out.log.layout, LogLayout { n_x: 4, n_xc: 2, n_u: 2, n_uhat: 2, with_phi: true });
}

#[test]
fn csv_round_trip_is_exact() {
    let log = run(&scenario(EXAMPLE3)).unwrap().log;
    let text = log.to_csv_string();
    let back = TrajectoryLog::from_csv_str(&text).unwrap();
    assert_eq!(back, log);
    assert_eq!(back.to_csv_string(), text);
    assert!(text.starts_with("t,x0,x1,x2,x3,xc0,xc1,u0,u1,uhat0,uhat1,ud0,ud1,mu,h,min_b,min_h,min_phi,status\n"));
}

#[test]
fn csv_rejects_unknown_header_and_status() {
    assert!(TrajectoryLog::from_csv_str("t,x0,bogus\n").is_err());
    let log = TrajectoryLog::new(LogLayout { n_x: 1, n_xc: 0, n_u: 1, n_uhat: 0, with_phi: false });
    let text = log.to_csv_string() + "0,1,2,3,4,5,6,7,flying\n";
    assert!(TrajectoryLog::from_csv_str(&text).is_err());
}

#[test]
fn runs_are_deterministic() {
    let sc = scenario(EXAMPLE3);
    assert_eq!(run(&sc).unwrap().log.to_csv_string(), run(&sc).unwrap().log.to_csv_string());
    assert_eq!(sample_goals(&sc, 20, 7), sample_goals(&sc, 20, 7));
    assert_ne!(sample_goals(&sc, 20, 7), sample_goals(&sc, 20, 8));
}

#[test]
fn sampled_goals_are_safe_positions() {
    let sc = scenario(EXAMPLE1);
    let goals = sample_goals(&sc, 200, 3);
    assert_eq!(goals[0], sc.goal);
    let map = sc.map_spec();
    assert!(goals.iter().all(|g| map.position_is_safe(*g)));
}

#[test]
fn single_goal_batch_reduces_to_run() {
    let sc = scenario(EXAMPLE3);
    let direct = run(&sc).unwrap();
    let batch = batch_goals(&sc, &[sc.goal], 0, 1, true).unwrap();
    assert_eq!(batch.runs.len(), 1);
    assert_eq!(batch.runs[0].log.as_ref().unwrap(), &direct.log);
    let s = batch.runs[0].summary.as_ref().unwrap();
    assert_eq!((s.status, s.min_h, s.steps), (direct.summary.status, direct.summary.min_h, direct.summary.steps));
    assert_eq!(batch.counts.runs, 1);
    assert_eq!(batch.counts.goal_reached, 1);
}

fn field_of(err: ScenarioError) -> String {
    match err {
        ScenarioError::Invalid { field, .. } => field,
        other => panic!("expected a field error, got {other}"),
    }
}

#[test]
fn validation_names_the_offending_field() {
    let bad = EXAMPLE1.replacen("alphas = [10.0]", "alphas = [10.0, 2.0]", 1);
    assert_eq!(field_of(Scenario::from_toml_str(&bad).unwrap_err()), "map.obstacles[0].alphas");
    let bad = EXAMPLE1.replace("rk4_substeps = 4", "rk4_substeps = 0");
    assert_eq!(field_of(Scenario::from_toml_str(&bad).unwrap_err()), "rk4_substeps");
    let bad = EXAMPLE1.replace("control_rate_hz = 40.0", "control_rate_hz = -1.0");
    assert_eq!(field_of(Scenario::from_toml_str(&bad).unwrap_err()), "control_rate_hz");
    let bad = EXAMPLE3.replace("sigma = [3.0]", "sigma = [3.0, 1.0]");
    assert_eq!(field_of(Scenario::from_toml_str(&bad).unwrap_err()), "input.dynamics.sigma");
    let bad = EXAMPLE1.replace("schema_version = 1", "schema_version = 2");
    assert_eq!(field_of(Scenario::from_toml_str(&bad).unwrap_err()), "schema_version");
}

#[test]
fn unknown_keys_are_parse_errors() {
    let bad = EXAMPLE1.replace("[gains]", "[gains]\nk4 = 1.0");
    match Scenario::from_toml_str(&bad).unwrap_err() {
        ScenarioError::Parse(m) => assert!(m.contains("k4"), "{m}"),
        other => panic!("{other}"),
    }
}

#[test]
fn empty_map_is_rejected() {
    let text = r#"
schema_version = 1
controller = "softmin_closed_form"
x0 = [0.0, 0.0, 0.0, 0.0]
goal = [1.0, 1.0]
horizon = 1.0
control_rate_hz = 10.0
[map]
"#;
    assert_eq!(field_of(Scenario::from_toml_str(text).unwrap_err()), "map");
}

#[test]
fn scenario_toml_round_trip() {
    for text in [EXAMPLE1, EXAMPLE3, EXAMPLE3_BASELINE] {
        let sc = scenario(text);
        assert_eq!(Scenario::from_toml_str(&sc.to_toml_string()).unwrap(), sc);
    }
}

#[test]
fn cascade_degrees_follow_controller_offset() {
    let sc = scenario(EXAMPLE3);
    assert!(sc.is_cascade());
    let degrees: Vec<usize> = sc.chain_tunings().iter().map(|t| t.degree).collect();
    assert_eq!(degrees, vec![3, 2, 2]);
    let lp = ClosedLoop::new(&sc).unwrap();
    assert_eq!(lp.initial_state(), &[-3.0, -2.0, 1.0, PI / 4.0, 0.0, 0.0]);
    let hat: Vec<usize> = lp.rcbf().chains().iter().map(|c| c.degree()).collect();
    assert_eq!(hat, vec![3, 2, 2, 1, 1, 1, 1]);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn cascade_runs_keep_constraints(gx in -9.0f64..9.0, gy in -9.0f64..9.0) {
        let sc = scenario(EXAMPLE3);
        prop_assume!(sc.map_spec().position_is_safe([gx, gy]));
        let sc = sc.with_goal([gx, gy]);
        let lp = ClosedLoop::new(&sc).unwrap();
        prop_assume!(lp.rcbf().membership(lp.initial_state()).unwrap().in_s);
        let out = run_closed_loop(&lp).unwrap();
        prop_assert!(out.summary.min_h >= -SAFETY_TOL);
        prop_assert!(out.summary.min_phi.unwrap() >= -SAFETY_TOL);
    }
}
