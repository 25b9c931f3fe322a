//! Trajectory logs and their CSV form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    GoalReached,
    Infeasible,
    SafetyViolation,
    HorizonEnd,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Running => "running",
            RunStatus::GoalReached => "goal_reached",
            RunStatus::Infeasible => "infeasible",
            RunStatus::SafetyViolation => "safety_violation",
            RunStatus::HorizonEnd => "horizon_end",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "running" => RunStatus::Running,
            "goal_reached" => RunStatus::GoalReached,
            "infeasible" => RunStatus::Infeasible,
            "safety_violation" => RunStatus::SafetyViolation,
            "horizon_end" => RunStatus::HorizonEnd,
            other => return Err(Error::InvalidParameter(format!("unknown run status `{other}`"))),
        })
    }
}

/// One control instant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub x_c: Vec<f64>,
    pub u: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub u_desired: Vec<f64>,
    pub mu: f64,
    /// Composite soft-min barrier.
    pub h: f64,
    /// min over every chain level b_{j,i}.
    pub min_b: f64,
    /// min over the safety functions h_j.
    pub min_h: f64,
    /// min over input-constraint margins, when input bounds exist.
    pub min_phi: Option<f64>,
    pub status: RunStatus,
}

/// Column layout of a log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LogLayout {
    pub n_x: usize,
    pub n_xc: usize,
    pub n_u: usize,
    pub n_uhat: usize,
    pub with_phi: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryLog {
    pub layout: LogLayout,
    pub rows: Vec<LogRow>,
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

impl LogLayout {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((0..self.n_x).map(|i| format!("x{i}")));
        h.extend((0..self.n_xc).map(|i| format!("xc{i}")));
        h.extend((0..self.n_u).map(|i| format!("u{i}")));
        h.extend((0..self.n_uhat).map(|i| format!("uhat{i}")));
        h.extend((0..self.n_u).map(|i| format!("ud{i}")));
        h.extend(["mu", "h", "min_b", "min_h"].map(String::from));
        if self.with_phi {
            h.push("min_phi".into());
        }
        h.push("status".into());
        h
    }

    fn from_header(header: &[String]) -> Result<LogLayout> {
        let count = |prefix: &str| {
            header
                .iter()
                .filter(|c| c.strip_prefix(prefix).is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())))
                .count()
        };
        let layout = LogLayout {
            n_x: count("x"),
            n_xc: count("xc"),
            n_u: count("u"),
            n_uhat: count("uhat"),
            with_phi: header.iter().any(|c| c == "min_phi"),
        };
        if layout.header() != header {
            return Err(Error::InvalidParameter(format!("unrecognized trajectory header: {}", header.join(","))));
        }
        Ok(layout)
    }
}

impl TrajectoryLog {
    pub fn new(layout: LogLayout) -> Self {
        TrajectoryLog { layout, rows: Vec::new() }
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.layout.header()).expect("in-memory write");
        for r in &self.rows {
            let mut rec: Vec<String> = vec![fmt_f64(r.t)];
            for part in [&r.x, &r.x_c, &r.u, &r.u_hat, &r.u_desired] {
                rec.extend(part.iter().map(|v| fmt_f64(*v)));
            }
            rec.extend([r.mu, r.h, r.min_b, r.min_h].map(fmt_f64));
            if self.layout.with_phi {
                rec.push(fmt_f64(r.min_phi.unwrap_or(f64::NAN)));
            }
            rec.push(r.status.to_string());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn from_csv_str(text: &str) -> Result<TrajectoryLog> {
        let bad = |e: csv::Error| Error::InvalidParameter(format!("trajectory csv: {e}"));
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r.headers().map_err(bad)?.iter().map(String::from).collect();
        let layout = LogLayout::from_header(&header)?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(bad)?;
            let mut it = rec.iter();
            let mut num = || -> Result<f64> {
                let s = it.next().ok_or(Error::InvalidParameter("trajectory csv: short row".into()))?;
                s.parse::<f64>().map_err(|e| Error::InvalidParameter(format!("trajectory csv: `{s}`: {e}")))
            };
            let t = num()?;
            let mut take = |k: usize| (0..k).map(|_| num()).collect::<Result<Vec<f64>>>();
            let x = take(layout.n_x)?;
            let x_c = take(layout.n_xc)?;
            let u = take(layout.n_u)?;
            let u_hat = take(layout.n_uhat)?;
            let u_desired = take(layout.n_u)?;
            let mut scalars = take(4)?;
            let min_phi = if layout.with_phi { Some(take(1)?[0]) } else { None };
            let status = rec.get(rec.len() - 1).unwrap_or("").parse()?;
            let min_h = scalars.pop().unwrap();
            let min_b = scalars.pop().unwrap();
            let h = scalars.pop().unwrap();
            let mu = scalars.pop().unwrap();
            rows.push(LogRow { t, x, x_c, u, u_hat, u_desired, mu, h, min_b, min_h, min_phi, status });
        }
        Ok(TrajectoryLog { layout, rows })
    }

    pub fn min_h(&self) -> f64 {
        self.rows.iter().map(|r| r.min_h).fold(f64::INFINITY, f64::min)
    }

    pub fn min_composite(&self) -> f64 {
        self.rows.iter().map(|r| r.h).fold(f64::INFINITY, f64::min)
    }

    pub fn min_b(&self) -> f64 {
        self.rows.iter().map(|r| r.min_b).fold(f64::INFINITY, f64::min)
    }

    pub fn min_phi(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.min_phi).reduce(f64::min)
    }
}
