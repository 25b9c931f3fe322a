//! Closed-loop simulation of the ground robot: plant, map, desired control,
//! scenario files, sampled-data runs, batches and diagnostics.

mod log;
mod run;
mod scenario;
mod unicycle;

pub use self::log::{fmt_f64, LogLayout, LogRow, RunStatus, TrajectoryLog};
pub use run::{
    batch_goals, compare_step_timing, diagnose, diagnostic_region, random_safe_states, run, run_closed_loop,
    sample_goals, BatchCounts, BatchRun, BatchSummary, ClosedLoop, ControlStep, DegreeCheck, DiagnosticsReport,
    RunFailure, RunOutcome, RunSummary, StepTiming, TimingComparison, SAFETY_TOL, VIOLATION_THRESHOLD,
};
pub use scenario::{
    BaselineConfig, ChainTuning, ControlDynamicsConfig, ControllerKind, DiagnoseConfig, FilterConfig, InputConfig,
    MapConfig, ObstacleConfig, Scenario, ScenarioError, SpeedConfig, WallConfig, SCHEMA_VERSION,
};
pub use unicycle::{
    desired_control, desired_control_at, ConstraintKind, Gains, MapSpec, Obstacle, SpeedBounds, UnicyclePlant, Wall,
    GOAL_DISTANCE_FLOOR,
};

#[cfg(test)]
mod tests;
