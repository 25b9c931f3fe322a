//! Sampled-data closed loop: zero-order-hold control, RK4 plant integration.

use std::time::Instant;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::log::{LogLayout, LogRow, RunStatus, TrajectoryLog};
use super::scenario::{matrix, ControllerKind, Scenario, ScenarioError};
use super::unicycle::{desired_control, MapSpec, UnicyclePlant};
use crate::cascade::{
    build_hat_constraints, matched_controller_state, rk4, surrogate_filter_from_eval, CascadePlant, ControlDynamics,
    HatConstraints, InputConstraintSpec, LTILowPass, SurrogateLaw,
};
use crate::composer::CompositeRCBF;
use crate::controller::{filter_with, QuadraticCost, SafeFilterParams};
use crate::error::{Error, Result};
use crate::hocbf::{BarrierChain, ClassKappa};
use crate::qp::{multiple_hocbf_control, InputBox, QPStatus};
use crate::smoothfield::{ScalarField, VectorFieldPair};

/// Tolerance of the safety certificates; a run is flagged below −10·tol.
pub const SAFETY_TOL: f64 = 1e-6;
pub const VIOLATION_THRESHOLD: f64 = -10.0 * SAFETY_TOL;

fn lin(k: f64) -> Result<ClassKappa> {
    ClassKappa::linear(k)
}

enum Mode {
    SoftMin { rcbf: CompositeRCBF, params: SafeFilterParams },
    Baseline { rcbf: CompositeRCBF, gammas: Vec<f64>, finals: Vec<ClassKappa>, input_box: Option<InputBox> },
    Cascade { plant: CascadePlant, rcbf: CompositeRCBF, law: SurrogateLaw, params: SafeFilterParams, spec: InputConstraintSpec },
}

/// A scenario compiled into dynamics, barriers and a controller.
pub struct ClosedLoop {
    scenario: Scenario,
    plant: VectorFieldPair,
    map: MapSpec,
    safety: Vec<BarrierChain>,
    cost: QuadraticCost,
    mode: Mode,
    x0: Vec<f64>,
}

fn map_chains(scenario: &Scenario, dim: usize) -> Result<Vec<BarrierChain>> {
    let map = scenario.map_spec();
    map.constraints()
        .into_iter()
        .zip(scenario.chain_tunings())
        .map(|((_, expr), t)| {
            let alphas = t.alphas.iter().map(|a| lin(*a)).collect::<Result<Vec<_>>>()?;
            BarrierChain::new(ScalarField::new(dim, expr)?, t.degree, alphas)
        })
        .collect()
}

impl ClosedLoop {
    pub fn new(scenario: &Scenario) -> std::result::Result<ClosedLoop, ScenarioError> {
        scenario.validate()?;
        ClosedLoop::build(scenario).map_err(|e| ScenarioError::Invalid { field: "scenario".into(), message: e.to_string() })
    }

    fn build(scenario: &Scenario) -> Result<ClosedLoop> {
        let plant = UnicyclePlant::dynamics();
        let map = scenario.map_spec();
        let cost = QuadraticCost::min_intervention(4, desired_control(&scenario.gains, scenario.goal))?;
        let f = &scenario.filter;
        let mut x0 = scenario.x0.clone();

        let (safety, mode) = match (scenario.controller, scenario.input.as_ref().and_then(|i| i.dynamics.as_ref().map(|d| (i, d)))) {
            (ControllerKind::SoftminClosedForm, None) => {
                let chains = map_chains(scenario, 4)?;
                let rcbf = CompositeRCBF::new(chains.clone(), plant.clone(), f.rho)?;
                (chains, Mode::SoftMin { rcbf, params: SafeFilterParams::new(f.gamma, lin(f.alpha)?)? })
            }
            (ControllerKind::MultipleHocbfBaseline, _) => {
                let chains = map_chains(scenario, 4)?;
                let rcbf = CompositeRCBF::new(chains.clone(), plant.clone(), f.rho)?;
                let gamma = scenario.baseline.gamma.unwrap_or(f.gamma);
                let alpha = scenario.baseline.alpha.unwrap_or(f.alpha);
                let input_box = match &scenario.input {
                    Some(i) => Some(InputBox::new(i.lo.clone(), i.hi.clone())?),
                    None => None,
                };
                let finals = (0..chains.len()).map(|_| lin(alpha)).collect::<Result<Vec<_>>>()?;
                let gammas = vec![gamma; chains.len()];
                (chains, Mode::Baseline { rcbf, gammas, finals, input_box })
            }
            (ControllerKind::SoftminClosedForm, Some((input, dy))) => {
                let sys = LTILowPass {
                    a: matrix("input.dynamics.a_c", &dy.a_c).map_err(|e| Error::InvalidParameter(e.to_string()))?,
                    b: matrix("input.dynamics.b_c", &dy.b_c).map_err(|e| Error::InvalidParameter(e.to_string()))?,
                    c: matrix("input.dynamics.c_c", &dy.c_c).map_err(|e| Error::InvalidParameter(e.to_string()))?,
                };
                let ctrl = ControlDynamics::lti(&sys)?;
                let n_c = ctrl.n_c();
                let cplant = CascadePlant::new(plant.clone(), ctrl)?;
                // base chains carry the natural degrees; the hat chains carry the scenario tuning
                let tunings = scenario.chain_tunings();
                let base: Vec<BarrierChain> = map
                    .constraints()
                    .into_iter()
                    .zip(&tunings)
                    .map(|((_, expr), t)| {
                        let d = t.degree.saturating_sub(1).max(1);
                        let alphas = vec![lin(1.0)?; d - 1];
                        BarrierChain::new(ScalarField::new(4, expr)?, d, alphas)
                    })
                    .collect::<Result<_>>()?;
                let spec = InputConstraintSpec::box_bounds(&input.lo, &input.hi, 1)?;
                let mut table: Vec<Vec<ClassKappa>> = tunings
                    .iter()
                    .map(|t| t.alphas.iter().map(|a| lin(*a)).collect::<Result<Vec<_>>>())
                    .collect::<Result<_>>()?;
                table.extend((0..spec.phis.len()).map(|_| Vec::new()));
                let mut hat = build_hat_constraints(&base, &spec, &cplant, &table)?;
                // honour declared degrees that differ from the natural ones
                for (j, t) in tunings.iter().enumerate() {
                    if hat.chains[j].degree() != t.degree {
                        hat.chains[j] = BarrierChain::new(hat.chains[j].h().clone(), t.degree, table[j].clone())?;
                    }
                }
                let HatConstraints { chains, .. } = &hat;
                let rcbf = CompositeRCBF::new(chains.clone(), cplant.combined().clone(), f.rho)?;
                let law = SurrogateLaw::new(dy.sigma.clone(), cost.lifted(4))?;
                let x_c0 = if dy.match_initial {
                    matched_controller_state(&cplant, &cost, &scenario.x0)?
                } else {
                    dy.x_c0.clone().unwrap_or_else(|| vec![0.0; n_c])
                };
                x0.extend(x_c0);
                let params = SafeFilterParams::new(f.gamma, lin(f.alpha)?)?;
                (base, Mode::Cascade { plant: cplant, rcbf, law, params, spec })
            }
        };
        Ok(ClosedLoop { scenario: scenario.clone(), plant, map, safety, cost, mode, x0 })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn map(&self) -> &MapSpec {
        &self.map
    }

    /// Safety chains over the plant state (natural degrees in cascade mode).
    pub fn safety_chains(&self) -> &[BarrierChain] {
        &self.safety
    }

    /// Composite barrier used by the controller (hat barrier in cascade mode).
    pub fn rcbf(&self) -> &CompositeRCBF {
        match &self.mode {
            Mode::SoftMin { rcbf, .. } | Mode::Baseline { rcbf, .. } | Mode::Cascade { rcbf, .. } => rcbf,
        }
    }

    pub fn cascade(&self) -> Option<(&CascadePlant, &SurrogateLaw, &InputConstraintSpec)> {
        match &self.mode {
            Mode::Cascade { plant, law, spec, .. } => Some((plant, law, spec)),
            _ => None,
        }
    }

    pub fn cost(&self) -> &QuadraticCost {
        &self.cost
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    pub fn layout(&self) -> LogLayout {
        let n_xc = self.x0.len() - 4;
        LogLayout {
            n_x: 4,
            n_xc,
            n_u: 2,
            n_uhat: if n_xc > 0 { 2 } else { 0 },
            with_phi: self.scenario.input.is_some(),
        }
    }

    /// Computes the held control at a sample instant.
    pub fn control(&self, state: &[f64]) -> Result<ControlStep> {
        let x = &state[..4];
        let eval = self.rcbf().evaluate(state)?;
        let u_desired: Vec<f64> = self.cost.at(x)?.minimizer(x)?.iter().copied().collect();
        let min_h = self.map.min_safety(x);
        let (h, min_b) = (eval.h, eval.min_level());
        match &self.mode {
            Mode::SoftMin { params, .. } => {
                let out = filter_with(&self.cost, &eval, params, x)?;
                let min_phi = None;
                Ok(ControlStep { u: out.u.clone(), u_hat: vec![], u_desired, mu: out.mu, h, min_b, min_h, min_phi, feasible: true })
            }
            Mode::Baseline { rcbf, gammas, finals, input_box } => {
                let out = multiple_hocbf_control(rcbf.chains(), rcbf.vf(), &u_desired, input_box.as_ref(), gammas, finals, x)?;
                let min_phi = input_box.as_ref().map(|b| box_margin(b, &out.u));
                let mu = out.slacks.iter().fold(0.0f64, |a, s| a.max(s.abs()));
                Ok(ControlStep {
                    u: out.u,
                    u_hat: vec![],
                    u_desired,
                    mu,
                    h,
                    min_b,
                    min_h,
                    min_phi,
                    feasible: out.status == QPStatus::Optimal,
                })
            }
            Mode::Cascade { plant, law, params, spec, .. } => {
                let out = surrogate_filter_from_eval(law, plant, &eval, params, state)?;
                let u = plant.ctrl().output(&state[4..]);
                let min_phi = spec.values(&u).into_iter().fold(f64::INFINITY, f64::min);
                Ok(ControlStep {
                    u,
                    u_hat: out.filter.u,
                    u_desired,
                    mu: out.filter.mu,
                    h,
                    min_b,
                    min_h,
                    min_phi: Some(min_phi),
                    feasible: true,
                })
            }
        }
    }

    /// Advances the state over one control period with the step's input held.
    pub fn advance(&self, state: &[f64], step: &ControlStep, dt: f64, substeps: usize) -> Vec<f64> {
        let h = dt / substeps as f64;
        let mut s = state.to_vec();
        match &self.mode {
            Mode::Cascade { plant, .. } => {
                let vf = plant.combined();
                for _ in 0..substeps {
                    s = rk4(|z| vf.velocity(z, &step.u_hat).iter().copied().collect(), &s, h);
                }
            }
            _ => {
                for _ in 0..substeps {
                    s = rk4(|z| self.plant.velocity(z, &step.u).iter().copied().collect(), &s, h);
                }
            }
        }
        s
    }
}

fn box_margin(b: &InputBox, u: &[f64]) -> f64 {
    (0..u.len()).map(|i| (u[i] - b.lo[i]).min(b.hi[i] - u[i])).fold(f64::INFINITY, f64::min)
}

/// Everything computed at one sample instant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlStep {
    pub u: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub u_desired: Vec<f64>,
    pub mu: f64,
    pub h: f64,
    pub min_b: f64,
    pub min_h: f64,
    pub min_phi: Option<f64>,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub controller: ControllerKind,
    pub status: RunStatus,
    pub goal: [f64; 2],
    pub steps: usize,
    pub final_time: f64,
    pub final_distance: f64,
    pub min_h: f64,
    pub min_b: f64,
    pub min_composite_h: f64,
    pub min_phi: Option<f64>,
    pub max_abs_u: Vec<f64>,
    pub violation: bool,
    pub first_violation_time: Option<f64>,
    pub mean_step_seconds: f64,
    pub max_step_seconds: f64,
    pub runtime_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub log: TrajectoryLog,
    pub summary: RunSummary,
}

/// A run stopped by a controller error; carries the log up to that instant.
#[derive(Debug, Error)]
#[error("run failed at t = {t}: {error}")]
pub struct RunFailure {
    pub t: f64,
    #[source]
    pub error: Error,
    pub log: TrajectoryLog,
}

/// A state constraint or, when input bounds exist, an input constraint is
/// below the violation threshold.
fn violates(min_h: f64, min_phi: Option<f64>) -> bool {
    min_h < VIOLATION_THRESHOLD || min_phi.is_some_and(|p| p < VIOLATION_THRESHOLD)
}

fn summarize(scenario: &Scenario, log: &TrajectoryLog, step_times: &[f64], runtime: f64) -> RunSummary {
    let last = log.last();
    let final_distance = last.map_or(f64::NAN, |r| (r.x[0] - scenario.goal[0]).hypot(r.x[1] - scenario.goal[1]));
    let first_violation_time = log.rows.iter().find(|r| violates(r.min_h, r.min_phi)).map(|r| r.t);
    let max_abs_u = (0..log.layout.n_u)
        .map(|k| log.rows.iter().map(|r| r.u[k].abs()).fold(0.0, f64::max))
        .collect();
    let n = step_times.len().max(1) as f64;
    RunSummary {
        name: scenario.name.clone(),
        controller: scenario.controller,
        status: last.map_or(RunStatus::Running, |r| r.status),
        goal: scenario.goal,
        steps: log.rows.len(),
        final_time: last.map_or(0.0, |r| r.t),
        final_distance,
        min_h: log.min_h(),
        min_b: log.min_b(),
        min_composite_h: log.min_composite(),
        min_phi: log.min_phi(),
        max_abs_u,
        violation: first_violation_time.is_some(),
        first_violation_time,
        mean_step_seconds: step_times.iter().sum::<f64>() / n,
        max_step_seconds: step_times.iter().copied().fold(0.0, f64::max),
        runtime_seconds: runtime,
    }
}

/// Runs a scenario to goal, horizon, or baseline infeasibility.
pub fn run(scenario: &Scenario) -> std::result::Result<RunOutcome, RunFailure> {
    let started = Instant::now();
    let lp = ClosedLoop::new(scenario).map_err(|e| RunFailure {
        t: 0.0,
        error: Error::InvalidParameter(e.to_string()),
        log: TrajectoryLog::new(LogLayout { n_x: 4, n_xc: 0, n_u: 2, n_uhat: 0, with_phi: false }),
    })?;
    run_loop(&lp, started)
}

/// Runs an already compiled closed loop.
pub fn run_closed_loop(lp: &ClosedLoop) -> std::result::Result<RunOutcome, RunFailure> {
    run_loop(lp, Instant::now())
}

fn run_loop(lp: &ClosedLoop, started: Instant) -> std::result::Result<RunOutcome, RunFailure> {
    let sc = lp.scenario();
    let dt = 1.0 / sc.control_rate_hz;
    let n_steps = (sc.horizon * sc.control_rate_hz).round() as usize;
    let mut log = TrajectoryLog::new(lp.layout());
    let mut step_times = Vec::with_capacity(n_steps + 1);
    let mut state = lp.initial_state().to_vec();
    for k in 0..=n_steps {
        let t = k as f64 * dt;
        let tick = Instant::now();
        let step = match lp.control(&state) {
            Ok(s) => s,
            Err(error) => {
                debug!("run `{}` failed at t = {t}: {error}", sc.name);
                return Err(RunFailure { t, error, log });
            }
        };
        step_times.push(tick.elapsed().as_secs_f64());
        let dist = (state[0] - sc.goal[0]).hypot(state[1] - sc.goal[1]);
        let status = if !step.feasible {
            RunStatus::Infeasible
        } else if dist <= sc.goal_radius && state[2].abs() <= sc.goal_speed {
            RunStatus::GoalReached
        } else if k == n_steps {
            RunStatus::HorizonEnd
        } else if violates(step.min_h, step.min_phi) {
            RunStatus::SafetyViolation
        } else {
            RunStatus::Running
        };
        log.rows.push(LogRow {
            t,
            x: state[..4].to_vec(),
            x_c: state[4..].to_vec(),
            u: step.u.clone(),
            u_hat: step.u_hat.clone(),
            u_desired: step.u_desired.clone(),
            mu: step.mu,
            h: step.h,
            min_b: step.min_b,
            min_h: step.min_h,
            min_phi: step.min_phi,
            status,
        });
        if matches!(status, RunStatus::Infeasible | RunStatus::GoalReached | RunStatus::HorizonEnd) {
            break;
        }
        state = lp.advance(&state, &step, dt, sc.rk4_substeps);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(RunFailure { t: t + dt, error: Error::NonFinite { what: "plant state".into(), x: state }, log });
        }
    }
    let summary = summarize(sc, &log, &step_times, started.elapsed().as_secs_f64());
    info!("run `{}` ended with {} at t = {:.3}", sc.name, summary.status, summary.final_time);
    Ok(RunOutcome { log, summary })
}

/// Goals drawn uniformly over safe positions (inside the wall, outside every
/// obstacle); entry 0 is the scenario goal.
pub fn sample_goals(scenario: &Scenario, n_goals: usize, seed: u64) -> Vec<[f64; 2]> {
    let map = scenario.map_spec();
    let (lo, hi) = map.wall.as_ref().map_or(([-10.0, -10.0], [10.0, 10.0]), |w| w.bounds());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut goals = Vec::with_capacity(n_goals);
    if n_goals > 0 {
        goals.push(scenario.goal);
    }
    while goals.len() < n_goals {
        let q = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        if map.position_is_safe(q) {
            goals.push(q);
        }
    }
    goals
}

#[derive(Clone, Debug, Serialize)]
pub struct BatchRun {
    pub index: usize,
    pub goal: [f64; 2],
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
    #[serde(skip)]
    pub log: Option<TrajectoryLog>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BatchCounts {
    pub runs: usize,
    pub safe: usize,
    pub goal_reached: usize,
    pub infeasible: usize,
    pub violations: usize,
    pub horizon_end: usize,
    pub errors: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepTiming {
    pub controller: ControllerKind,
    pub steps: usize,
    pub mean_step_seconds: f64,
    pub max_step_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BatchSummary {
    pub scenario: String,
    pub seed: u64,
    pub counts: BatchCounts,
    pub min_h_over_runs: f64,
    pub timing: StepTiming,
    pub wall_seconds: f64,
    pub runs: Vec<BatchRun>,
}

/// Runs the scenario once per goal on a pool of `workers` threads.
pub fn batch_goals(scenario: &Scenario, goals: &[[f64; 2]], seed: u64, workers: usize, keep_logs: bool) -> Result<BatchSummary> {
    if goals.is_empty() {
        return Err(Error::Empty("goal list"));
    }
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let runs: Vec<BatchRun> = pool.install(|| {
        goals
            .par_iter()
            .enumerate()
            .map(|(index, goal)| match run(&scenario.with_goal(*goal)) {
                Ok(out) => BatchRun {
                    index,
                    goal: *goal,
                    summary: Some(out.summary),
                    error: None,
                    log: keep_logs.then_some(out.log),
                },
                Err(f) => BatchRun { index, goal: *goal, summary: None, error: Some(f.to_string()), log: keep_logs.then_some(f.log) },
            })
            .collect()
    });
    let mut counts = BatchCounts { runs: runs.len(), ..Default::default() };
    let (mut total_time, mut total_steps, mut max_step) = (0.0, 0usize, 0.0f64);
    let mut min_h = f64::INFINITY;
    for r in &runs {
        match &r.summary {
            None => counts.errors += 1,
            Some(s) => {
                counts.safe += (!s.violation) as usize;
                counts.violations += s.violation as usize;
                match s.status {
                    RunStatus::GoalReached => counts.goal_reached += 1,
                    RunStatus::Infeasible => counts.infeasible += 1,
                    RunStatus::HorizonEnd => counts.horizon_end += 1,
                    _ => {}
                }
                min_h = min_h.min(s.min_h);
                total_time += s.mean_step_seconds * s.steps as f64;
                total_steps += s.steps;
                max_step = max_step.max(s.max_step_seconds);
            }
        }
    }
    Ok(BatchSummary {
        scenario: scenario.name.clone(),
        seed,
        counts,
        min_h_over_runs: min_h,
        timing: StepTiming {
            controller: scenario.controller,
            steps: total_steps,
            mean_step_seconds: total_time / total_steps.max(1) as f64,
            max_step_seconds: max_step,
        },
        wall_seconds: started.elapsed().as_secs_f64(),
        runs,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TimingComparison {
    pub states: usize,
    pub closed_form_mean_seconds: f64,
    pub baseline_mean_seconds: f64,
}

/// Times the closed-form filter and the multiple-barrier QP on the same
/// states with the same chains and tuning.
pub fn compare_step_timing(scenario: &Scenario, states: &[Vec<f64>]) -> Result<TimingComparison> {
    if states.is_empty() {
        return Err(Error::Empty("state list"));
    }
    let mut soft = scenario.clone();
    soft.controller = ControllerKind::SoftminClosedForm;
    soft.input = None;
    let mut base = soft.clone();
    base.controller = ControllerKind::MultipleHocbfBaseline;
    let to_err = |e: ScenarioError| Error::InvalidParameter(e.to_string());
    let soft = ClosedLoop::new(&soft).map_err(to_err)?;
    let base = ClosedLoop::new(&base).map_err(to_err)?;
    let time = |lp: &ClosedLoop| -> Result<f64> {
        let t = Instant::now();
        for s in states {
            std::hint::black_box(lp.control(&s[..4])?);
        }
        Ok(t.elapsed().as_secs_f64() / states.len() as f64)
    };
    // warm both paths once before timing
    soft.control(&states[0][..4])?;
    base.control(&states[0][..4])?;
    Ok(TimingComparison { states: states.len(), closed_form_mean_seconds: time(&soft)?, baseline_mean_seconds: time(&base)? })
}

/// Axis-aligned sampling region for diagnostics: wall box, speed bounds,
/// heading in [−π, π] and, in cascade mode, the input box for x_c.
pub fn diagnostic_region(scenario: &Scenario) -> (Vec<f64>, Vec<f64>) {
    if let (Some(lo), Some(hi)) = (&scenario.diagnose.region_lo, &scenario.diagnose.region_hi) {
        return (lo.clone(), hi.clone());
    }
    let map = scenario.map_spec();
    let (qlo, qhi) = map.wall.as_ref().map_or(([-10.0, -10.0], [10.0, 10.0]), |w| w.bounds());
    let (vlo, vhi) = map.speed.as_ref().map_or((-1.0, 1.0), |s| (s.min, s.max));
    let pi = std::f64::consts::PI;
    let mut lo = vec![qlo[0], qlo[1], vlo, -pi];
    let mut hi = vec![qhi[0], qhi[1], vhi, pi];
    if scenario.is_cascade() {
        let input = scenario.input.as_ref().expect("cascade has input");
        let n_c = scenario.controller_state_dim();
        // x_c is read through C_c; for C_c = I this is exactly the input box
        for k in 0..n_c {
            lo.push(input.lo[k.min(1)]);
            hi.push(input.hi[k.min(1)]);
        }
    }
    (lo, hi)
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeCheck {
    pub chain: usize,
    pub degree: usize,
    pub samples: usize,
    pub failures: usize,
    pub max_lower: f64,
    pub min_terminal: f64,
    pub max_product_residual: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticsReport {
    pub scenario: String,
    pub cascade: bool,
    pub region_lo: Vec<f64>,
    pub region_hi: Vec<f64>,
    pub tol: f64,
    pub relative_degree: Vec<DegreeCheck>,
    pub relative_degree_pass: bool,
    pub boundary: crate::composer::BoundaryReport,
}

/// Relative-degree checks for every chain plus the boundary diagnostic for
/// L_g h on the composite barrier.
pub fn diagnose(scenario: &Scenario, seed: u64) -> Result<DiagnosticsReport> {
    let lp = ClosedLoop::new(scenario).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let (lo, hi) = diagnostic_region(scenario);
    let region = crate::composer::BoxRegion { lo: lo.clone(), hi: hi.clone() };
    region.validate(lo.len())?;
    let cfg = &scenario.diagnose;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec<f64>> = (0..cfg.samples).map(|_| region.sample(&mut rng)).collect();
    let mut checks = Vec::new();
    match lp.cascade() {
        Some((plant, _, _)) => {
            let hat = HatConstraints {
                chains: lp.rcbf().chains().to_vec(),
                sources: lp
                    .safety_chains()
                    .iter()
                    .enumerate()
                    .map(|(index, c)| crate::cascade::HatSource::Safety { index, base_degree: c.degree() })
                    .chain((0..4).map(|index| crate::cascade::HatSource::Input { index }))
                    .collect(),
            };
            let report = crate::cascade::verify_cascade_relative_degree(plant, &hat, &samples, cfg.tol)?;
            for j in 0..hat.chains.len() {
                let mine: Vec<_> = report.samples.iter().filter(|s| s.chain == j).collect();
                checks.push(DegreeCheck {
                    chain: j,
                    degree: hat.chains[j].degree(),
                    samples: mine.len(),
                    failures: mine.iter().filter(|s| !s.pass).count(),
                    max_lower: mine.iter().map(|s| s.lower_max).fold(0.0, f64::max),
                    min_terminal: mine.iter().map(|s| s.terminal_norm).fold(f64::INFINITY, f64::min),
                    max_product_residual: mine.iter().filter_map(|s| s.product_residual).reduce(f64::max),
                    pass: mine.iter().all(|s| s.pass),
                });
            }
        }
        None => {
            let vf = lp.rcbf().vf();
            for (j, chain) in lp.rcbf().chains().iter().enumerate() {
                let r = crate::hocbf::check_relative_degree(chain, vf, &samples, cfg.tol)?;
                let d = chain.degree();
                checks.push(DegreeCheck {
                    chain: j,
                    degree: d,
                    samples: r.samples.len(),
                    failures: r.failures().count(),
                    max_lower: r.samples.iter().flat_map(|s| s.norms[..d - 1].iter().copied()).fold(0.0, f64::max),
                    min_terminal: r.samples.iter().map(|s| s.norms[d - 1]).fold(f64::INFINITY, f64::min),
                    max_product_residual: None,
                    pass: r.all_pass,
                });
            }
        }
    }
    let band = cfg.band.unwrap_or_else(|| region.default_band());
    let boundary = lp.rcbf().boundary_diagnostic(&region, cfg.samples, band, cfg.tol, seed)?;
    let pass = checks.iter().all(|c| c.pass);
    Ok(DiagnosticsReport {
        scenario: scenario.name.clone(),
        cascade: lp.cascade().is_some(),
        region_lo: lo,
        region_hi: hi,
        tol: cfg.tol,
        relative_degree: checks,
        relative_degree_pass: pass,
        boundary,
    })
}

/// Uniform random states with the plant part inside the safe set.
pub fn random_safe_states(lp: &ClosedLoop, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let (lo, hi) = diagnostic_region(lp.scenario());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let s: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
        if lp.map().min_safety(&s[..4]) > 0.0 {
            out.push(s);
        }
    }
    out
}
