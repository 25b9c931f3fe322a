//! Ground-robot plant, map barriers and the goal-seeking desired control.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smoothfield::{Expr, VectorFieldPair};

/// Floor on ‖q − q_d‖ in the heading-rate term of the desired control.
pub const GOAL_DISTANCE_FLOOR: f64 = 1e-6;

/// Nonholonomic ground robot with state (q_x, q_y, v, θ) and input
/// (acceleration, turn rate).
#[derive(Clone, Copy, Debug, Default)]
pub struct UnicyclePlant;

impl UnicyclePlant {
    pub const STATE_DIM: usize = 4;
    pub const INPUT_DIM: usize = 2;

    pub fn dynamics() -> VectorFieldPair {
        let x = Expr::vars(4);
        let (v, theta) = (&x[2], &x[3]);
        let f = vec![v * &theta.cos(), v * &theta.sin(), Expr::zero(), Expr::zero()];
        let z = Expr::zero;
        let one = || Expr::constant(1.0);
        let g = vec![vec![z(), z()], vec![z(), z()], vec![one(), z()], vec![z(), one()]];
        VectorFieldPair::new(4, 2, f, g).expect("unicycle dynamics are well formed")
    }

    pub fn state_names() -> [&'static str; 4] {
        ["q_x", "q_y", "v", "theta"]
    }
}

/// Region outside ‖(a_x(q_x − b_x), a_y(q_y − b_y))‖_p = c.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub scale: [f64; 2],
    pub c: f64,
    pub p: f64,
}

/// Region inside ‖(a_x q_x, a_y q_y)‖_p = c.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub scale: [f64; 2],
    pub c: f64,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedBounds {
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Obstacle,
    Wall,
    SpeedMax,
    SpeedMin,
}

impl ConstraintKind {
    /// Relative degree of the constraint on the unicycle.
    pub fn base_degree(self) -> usize {
        match self {
            ConstraintKind::Obstacle | ConstraintKind::Wall => 2,
            ConstraintKind::SpeedMax | ConstraintKind::SpeedMin => 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub obstacles: Vec<Obstacle>,
    pub wall: Option<Wall>,
    pub speed: Option<SpeedBounds>,
}

fn superellipse(center: [f64; 2], scale: [f64; 2], c: f64, p: f64, points: usize) -> Vec<[f64; 2]> {
    (0..=points)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / points as f64;
            let (s, co) = t.sin_cos();
            let e = 2.0 / p;
            [
                center[0] + c / scale[0] * co.signum() * co.abs().powf(e),
                center[1] + c / scale[1] * s.signum() * s.abs().powf(e),
            ]
        })
        .collect()
}

impl Obstacle {
    pub fn field(&self) -> Expr {
        let x = Expr::vars(2);
        let dx = (&x[0] - self.center[0]) * self.scale[0];
        let dy = (&x[1] - self.center[1]) * self.scale[1];
        Expr::norm_p(&[dx, dy], self.p) - self.c
    }

    pub fn outline(&self, points: usize) -> Vec<[f64; 2]> {
        superellipse(self.center, self.scale, self.c, self.p, points)
    }
}

impl Wall {
    pub fn field(&self) -> Expr {
        let x = Expr::vars(2);
        self.c - Expr::norm_p(&[&x[0] * self.scale[0], &x[1] * self.scale[1]], self.p)
    }

    pub fn outline(&self, points: usize) -> Vec<[f64; 2]> {
        superellipse([0.0, 0.0], self.scale, self.c, self.p, points)
    }

    /// Axis-aligned box enclosing the interior.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let (hx, hy) = (self.c / self.scale[0], self.c / self.scale[1]);
        ([-hx, -hy], [hx, hy])
    }
}

impl MapSpec {
    pub fn validate(&self) -> Result<()> {
        let shape = |what: String, scale: [f64; 2], c: f64, p: f64| -> Result<()> {
            if !(scale.iter().all(|a| *a > 0.0 && a.is_finite()) && c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter(format!("{what}: scale and c must be positive")));
            }
            if !(p >= 1.0 && p.is_finite()) {
                return Err(Error::InvalidParameter(format!("{what}: p must be ≥ 1")));
            }
            Ok(())
        };
        for (i, o) in self.obstacles.iter().enumerate() {
            shape(format!("obstacle {i}"), o.scale, o.c, o.p)?;
        }
        if let Some(w) = &self.wall {
            shape("wall".into(), w.scale, w.c, w.p)?;
        }
        if let Some(s) = &self.speed {
            if !(s.min < s.max) {
                return Err(Error::InvalidParameter("speed bounds: need min < max".into()));
            }
        }
        if self.len() == 0 {
            return Err(Error::Empty("constraint list"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.obstacles.len() + self.wall.is_some() as usize + 2 * self.speed.is_some() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Safety functions over the unicycle state, in order: obstacles, wall,
    /// speed maximum, speed minimum.
    pub fn constraints(&self) -> Vec<(ConstraintKind, Expr)> {
        let mut out: Vec<(ConstraintKind, Expr)> =
            self.obstacles.iter().map(|o| (ConstraintKind::Obstacle, o.field())).collect();
        if let Some(w) = &self.wall {
            out.push((ConstraintKind::Wall, w.field()));
        }
        if let Some(s) = &self.speed {
            let v = Expr::var(2);
            out.push((ConstraintKind::SpeedMax, s.max - &v));
            out.push((ConstraintKind::SpeedMin, v - s.min));
        }
        out
    }

    /// min_j h_j(x).
    pub fn min_safety(&self, x: &[f64]) -> f64 {
        self.constraints().iter().map(|(_, e)| e.eval(x)).fold(f64::INFINITY, f64::min)
    }

    /// Whether a position clears every obstacle and lies inside the wall.
    pub fn position_is_safe(&self, q: [f64; 2]) -> bool {
        self.constraints()
            .iter()
            .filter(|(k, _)| matches!(k, ConstraintKind::Obstacle | ConstraintKind::Wall))
            .all(|(_, e)| e.eval(&q) > 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Gains { k1: 0.2, k2: 1.0, k3: 2.0 }
    }
}

/// Goal-seeking control that ignores every safety constraint:
///
/// u_1 = −(k₁+k₃)v + (1+k₁k₃) r cos ψ + k₁(k₂ r + v) sin²ψ
/// u_2 = (k₂ + v / r) sin ψ,   r = ‖q − q_d‖,  ψ = atan2(q_y−q_{d,y}, q_x−q_{d,x}) − θ + π
pub fn desired_control(gains: &Gains, goal: [f64; 2]) -> Vec<Expr> {
    let x = Expr::vars(4);
    let dx = &x[0] - goal[0];
    let dy = &x[1] - goal[1];
    let r = (dx.powi(2) + dy.powi(2)).sqrt();
    let psi = dy.atan2(&dx) - &x[3] + PI;
    let (s, c) = (psi.sin(), psi.cos());
    let v = &x[2];
    let Gains { k1, k2, k3 } = *gains;
    let u1 = v * (-(k1 + k3)) + &r * &c * (1.0 + k1 * k3) + (&r * k2 + v) * s.powi(2) * k1;
    let u2 = (v / &r.clamp_min(GOAL_DISTANCE_FLOOR) + k2) * s;
    vec![u1, u2]
}

pub fn desired_control_at(gains: &Gains, goal: [f64; 2], x: &[f64]) -> [f64; 2] {
    let u = desired_control(gains, goal);
    [u[0].eval(x), u[1].eval(x)]
}
