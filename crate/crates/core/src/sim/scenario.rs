//! Declarative scenario files (TOML, `schema_version = 1`).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::unicycle::{Gains, MapSpec, Obstacle, SpeedBounds, Wall};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    SoftminClosedForm,
    MultipleHocbfBaseline,
}

fn one_scale() -> [f64; 2] {
    [1.0, 1.0]
}
fn two() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    pub center: [f64; 2],
    #[serde(default = "one_scale")]
    pub scale: [f64; 2],
    pub c: f64,
    #[serde(default = "two")]
    pub p: f64,
    /// Linear class-K slopes α_{j,0}, α_{j,1}, … of the barrier chain.
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// Declared chain degree; defaults to the natural one.
    #[serde(default)]
    pub degree: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallConfig {
    #[serde(default = "one_scale")]
    pub scale: [f64; 2],
    pub c: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub degree: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedConfig {
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub degree: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    #[serde(default)]
    pub obstacles: Vec<ObstacleConfig>,
    #[serde(default)]
    pub wall: Option<WallConfig>,
    #[serde(default)]
    pub speed: Option<SpeedConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "FilterConfig::default_rho")]
    pub rho: f64,
    #[serde(default = "FilterConfig::default_gamma")]
    pub gamma: f64,
    /// Slope of the linear class-K function in the composite constraint.
    #[serde(default = "FilterConfig::default_alpha")]
    pub alpha: f64,
}

impl FilterConfig {
    fn default_rho() -> f64 {
        10.0
    }
    fn default_gamma() -> f64 {
        1e24
    }
    fn default_alpha() -> f64 {
        1.0
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { rho: 10.0, gamma: 1e24, alpha: 1.0 }
    }
}

/// Baseline tuning; unset fields fall back to the `[filter]` values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlDynamicsConfig {
    pub a_c: Vec<Vec<f64>>,
    pub b_c: Vec<Vec<f64>>,
    pub c_c: Vec<Vec<f64>>,
    #[serde(default)]
    pub x_c0: Option<Vec<f64>>,
    /// Start the controller state so that its output equals the desired control.
    #[serde(default)]
    pub match_initial: bool,
    pub sigma: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Class-K slopes for each input-constraint chain (empty for degree one).
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub dynamics: Option<ControlDynamicsConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default = "DiagnoseConfig::default_samples")]
    pub samples: usize,
    #[serde(default = "DiagnoseConfig::default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub band: Option<f64>,
    #[serde(default)]
    pub region_lo: Option<Vec<f64>>,
    #[serde(default)]
    pub region_hi: Option<Vec<f64>>,
}

impl DiagnoseConfig {
    fn default_samples() -> usize {
        200
    }
    fn default_tol() -> f64 {
        1e-8
    }
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig { samples: 200, tol: 1e-8, band: None, region_lo: None, region_hi: None }
    }
}

fn default_substeps() -> usize {
    4
}
fn default_goal_radius() -> f64 {
    0.2
}
fn default_goal_speed() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub controller: ControllerKind,
    pub x0: Vec<f64>,
    pub goal: [f64; 2],
    pub horizon: f64,
    pub control_rate_hz: f64,
    #[serde(default = "default_substeps")]
    pub rk4_substeps: usize,
    #[serde(default = "default_goal_radius")]
    pub goal_radius: f64,
    #[serde(default = "default_goal_speed")]
    pub goal_speed: f64,
    #[serde(default)]
    pub gains: Gains,
    pub map: MapConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub input: Option<InputConfig>,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
}

/// Chain data for one safety constraint: declared degree and class-K slopes.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainTuning {
    pub field: String,
    pub degree: usize,
    pub alphas: Vec<f64>,
}

pub(crate) fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ScenarioError> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(invalid(field, "must be a non-empty rectangular array of rows"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid(field, "entries must be finite"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Scenario::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn with_goal(&self, goal: [f64; 2]) -> Scenario {
        Scenario { goal, ..self.clone() }
    }

    /// Whether the run uses controller dynamics (input constraints as states).
    pub fn is_cascade(&self) -> bool {
        self.controller == ControllerKind::SoftminClosedForm
            && self.input.as_ref().is_some_and(|i| i.dynamics.is_some())
    }

    /// Controller relative degree added to every safety chain.
    pub fn degree_offset(&self) -> usize {
        if self.is_cascade() {
            1
        } else {
            0
        }
    }

    pub fn map_spec(&self) -> MapSpec {
        MapSpec {
            obstacles: self
                .map
                .obstacles
                .iter()
                .map(|o| Obstacle { center: o.center, scale: o.scale, c: o.c, p: o.p })
                .collect(),
            wall: self.map.wall.as_ref().map(|w| Wall { scale: w.scale, c: w.c, p: w.p }),
            speed: self.map.speed.as_ref().map(|s| SpeedBounds { min: s.min, max: s.max }),
        }
    }

    /// Chain tuning per safety constraint, in [`MapSpec::constraints`] order.
    pub fn chain_tunings(&self) -> Vec<ChainTuning> {
        let off = self.degree_offset();
        let mut out = Vec::new();
        for (i, o) in self.map.obstacles.iter().enumerate() {
            out.push(ChainTuning {
                field: format!("map.obstacles[{i}]"),
                degree: o.degree.unwrap_or(2 + off),
                alphas: o.alphas.clone(),
            });
        }
        if let Some(w) = &self.map.wall {
            out.push(ChainTuning { field: "map.wall".into(), degree: w.degree.unwrap_or(2 + off), alphas: w.alphas.clone() });
        }
        if let Some(s) = &self.map.speed {
            for _ in 0..2 {
                out.push(ChainTuning {
                    field: "map.speed".into(),
                    degree: s.degree.unwrap_or(1 + off),
                    alphas: s.alphas.clone(),
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version)));
        }
        if self.x0.len() != 4 || self.x0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("x0", "must hold 4 finite numbers (q_x, q_y, v, theta)"));
        }
        if !self.goal.iter().all(|g| g.is_finite()) {
            return Err(invalid("goal", "must be finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", "must be > 0"));
        }
        if !(self.control_rate_hz > 0.0 && self.control_rate_hz.is_finite()) {
            return Err(invalid("control_rate_hz", "must be > 0"));
        }
        if self.rk4_substeps < 1 {
            return Err(invalid("rk4_substeps", "must be ≥ 1"));
        }
        if !(self.goal_radius > 0.0) {
            return Err(invalid("goal_radius", "must be > 0"));
        }
        if !(self.goal_speed > 0.0) {
            return Err(invalid("goal_speed", "must be > 0"));
        }
        let f = &self.filter;
        if !(f.rho > 0.0 && f.rho.is_finite()) {
            return Err(invalid("filter.rho", "must be > 0"));
        }
        if !(f.gamma > 0.0) {
            return Err(invalid("filter.gamma", "must be > 0"));
        }
        if !(f.alpha > 0.0 && f.alpha.is_finite()) {
            return Err(invalid("filter.alpha", "must be > 0"));
        }
        if self.baseline.gamma.is_some_and(|g| !(g > 0.0)) {
            return Err(invalid("baseline.gamma", "must be > 0"));
        }
        if self.baseline.alpha.is_some_and(|a| !(a > 0.0 && a.is_finite())) {
            return Err(invalid("baseline.alpha", "must be > 0"));
        }

        self.validate_map()?;

        for t in self.chain_tunings() {
            if t.degree == 0 {
                return Err(invalid(format!("{}.degree", t.field), "must be ≥ 1"));
            }
            if t.alphas.len() != t.degree - 1 {
                return Err(invalid(
                    format!("{}.alphas", t.field),
                    format!("chain of degree {} needs {} class-K slopes, got {}", t.degree, t.degree - 1, t.alphas.len()),
                ));
            }
            if t.alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                return Err(invalid(format!("{}.alphas", t.field), "slopes must be > 0"));
            }
        }

        if let Some(input) = &self.input {
            self.validate_input(input)?;
        }
        let d = &self.diagnose;
        if d.samples == 0 {
            return Err(invalid("diagnose.samples", "must be ≥ 1"));
        }
        if !(d.tol > 0.0) {
            return Err(invalid("diagnose.tol", "must be > 0"));
        }
        let dim = 4 + self.controller_state_dim();
        for (name, region) in [("diagnose.region_lo", &d.region_lo), ("diagnose.region_hi", &d.region_hi)] {
            if let Some(r) = region {
                if r.len() != dim {
                    return Err(invalid(name, format!("needs {dim} entries")));
                }
            }
        }
        Ok(())
    }

    fn validate_map(&self) -> Result<(), ScenarioError> {
        let shape = |field: String, scale: [f64; 2], c: f64, p: f64| -> Result<(), ScenarioError> {
            if !scale.iter().all(|a| *a > 0.0 && a.is_finite()) {
                return Err(invalid(format!("{field}.scale"), "entries must be > 0"));
            }
            if !(c > 0.0 && c.is_finite()) {
                return Err(invalid(format!("{field}.c"), "must be > 0"));
            }
            if !(p >= 1.0 && p.is_finite()) {
                return Err(invalid(format!("{field}.p"), "must be ≥ 1"));
            }
            Ok(())
        };
        for (i, o) in self.map.obstacles.iter().enumerate() {
            if !o.center.iter().all(|v| v.is_finite()) {
                return Err(invalid(format!("map.obstacles[{i}].center"), "must be finite"));
            }
            shape(format!("map.obstacles[{i}]"), o.scale, o.c, o.p)?;
        }
        if let Some(w) = &self.map.wall {
            shape("map.wall".into(), w.scale, w.c, w.p)?;
        }
        if let Some(s) = &self.map.speed {
            if !(s.min < s.max) {
                return Err(invalid("map.speed", "need min < max"));
            }
        }
        if self.map_spec().is_empty() {
            return Err(invalid("map", "constraint list is empty"));
        }
        Ok(())
    }

    fn validate_input(&self, input: &InputConfig) -> Result<(), ScenarioError> {
        if input.lo.len() != 2 || input.hi.len() != 2 {
            return Err(invalid("input.lo", "input bounds need 2 entries each"));
        }
        for i in 0..2 {
            if !(input.lo[i] < input.hi[i]) {
                return Err(invalid("input.hi", format!("entry {i} must exceed input.lo")));
            }
        }
        match (&input.dynamics, self.controller) {
            (Some(_), ControllerKind::MultipleHocbfBaseline) => {
                return Err(invalid("input.dynamics", "only used by the softmin_closed_form controller"));
            }
            (None, ControllerKind::SoftminClosedForm) => {
                return Err(invalid("input.dynamics", "required when input bounds are set for softmin_closed_form"));
            }
            _ => {}
        }
        if !input.alphas.is_empty() {
            return Err(invalid("input.alphas", "input constraints have relative degree one here; leave empty"));
        }
        if let Some(dy) = &input.dynamics {
            let a = matrix("input.dynamics.a_c", &dy.a_c)?;
            let b = matrix("input.dynamics.b_c", &dy.b_c)?;
            let c = matrix("input.dynamics.c_c", &dy.c_c)?;
            let n_c = a.nrows();
            if a.ncols() != n_c {
                return Err(invalid("input.dynamics.a_c", "must be square"));
            }
            if b.nrows() != n_c || b.ncols() != 2 {
                return Err(invalid("input.dynamics.b_c", format!("must be {n_c}×2")));
            }
            if c.nrows() != 2 || c.ncols() != n_c {
                return Err(invalid("input.dynamics.c_c", format!("must be 2×{n_c}")));
            }
            if let Some(x) = &dy.x_c0 {
                if x.len() != n_c || x.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("input.dynamics.x_c0", format!("needs {n_c} finite entries")));
                }
            }
            if dy.sigma.len() != 1 {
                return Err(invalid("input.dynamics.sigma", "LTI dynamics have relative degree one: give one gain"));
            }
            if dy.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(invalid("input.dynamics.sigma", "gains must be > 0"));
            }
        }
        Ok(())
    }

    pub fn controller_state_dim(&self) -> usize {
        self.input.as_ref().and_then(|i| i.dynamics.as_ref()).map_or(0, |d| d.a_c.len())
    }
}
