//! Minimal SVG emitters for trajectories and barrier time series.

use std::fmt::Write;

use softmin_cbf::sim::{MapSpec, TrajectoryLog};

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 48.0;

struct Frame {
    lo: [f64; 2],
    hi: [f64; 2],
    equal: bool,
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>, equal: bool) -> Frame {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points.filter(|p| p[0].is_finite() && p[1].is_finite()) {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        for k in 0..2 {
            if !(hi[k] > lo[k]) {
                let c = if lo[k].is_finite() { lo[k] } else { 0.0 };
                lo[k] = c - 1.0;
                hi[k] = c + 1.0;
            }
        }
        if equal {
            let sx = (hi[0] - lo[0]) / (W - 2.0 * PAD);
            let sy = (hi[1] - lo[1]) / (H - 2.0 * PAD);
            let s = sx.max(sy);
            let cx = 0.5 * (lo[0] + hi[0]);
            let cy = 0.5 * (lo[1] + hi[1]);
            lo = [cx - s * (W - 2.0 * PAD) / 2.0, cy - s * (H - 2.0 * PAD) / 2.0];
            hi = [cx + s * (W - 2.0 * PAD) / 2.0, cy + s * (H - 2.0 * PAD) / 2.0];
        }
        Frame { lo, hi, equal }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        let x = PAD + (p[0] - self.lo[0]) / (self.hi[0] - self.lo[0]) * (W - 2.0 * PAD);
        let y = H - PAD - (p[1] - self.lo[1]) / (self.hi[1] - self.lo[1]) * (H - 2.0 * PAD);
        (x, y)
    }

    fn polyline(&self, out: &mut String, pts: &[[f64; 2]], style: &str) {
        let mut d = String::new();
        for p in pts.iter().filter(|p| p[0].is_finite() && p[1].is_finite()) {
            let (x, y) = self.map(*p);
            let _ = write!(d, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, d.trim_end());
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            out,
            r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.lo[0] + f * (self.hi[0] - self.lo[0]);
            let yv = self.lo[1] + f * (self.hi[1] - self.lo[1]);
            let (x, _) = self.map([xv, self.lo[1]]);
            let (_, y) = self.map([self.lo[0], yv]);
            let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle">{xv:.3}</text>"#, H - PAD + 16.0);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}" font-size="11" text-anchor="end">{yv:.3}</text>"#, PAD - 4.0);
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 8.0);
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">{ylabel}</text>"#,
            H / 2.0,
            H / 2.0
        );
        let _ = self.equal;
    }
}

fn open() -> String {
    format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#) + "\n"
        + r#"<rect width="100%" height="100%" fill="white"/>"# + "\n"
}

/// x–y path over the map outline.
pub fn trajectory_svg(map: &MapSpec, goal: [f64; 2], log: &TrajectoryLog) -> String {
    let path: Vec<[f64; 2]> = log.rows.iter().map(|r| [r.x[0], r.x[1]]).collect();
    let mut shapes: Vec<Vec<[f64; 2]>> = map.obstacles.iter().map(|o| o.outline(180)).collect();
    let wall = map.wall.as_ref().map(|w| w.outline(360));
    let extent = path
        .iter()
        .copied()
        .chain(shapes.iter().flatten().copied())
        .chain(wall.iter().flatten().copied())
        .chain(std::iter::once(goal));
    let frame = Frame::fit(extent, true);
    let mut s = open();
    frame.axes(&mut s, "q_x", "q_y");
    if let Some(w) = &wall {
        frame.polyline(&mut s, w, r##"stroke="#222" stroke-width="2""##);
    }
    for o in shapes.drain(..) {
        frame.polyline(&mut s, &o, r##"stroke="#a33" stroke-width="1.5" fill-opacity="0.2""##);
    }
    frame.polyline(&mut s, &path, r##"stroke="#1f5fbf" stroke-width="1.8""##);
    for (p, colour) in [(path.first().copied(), "#1f5fbf"), (Some(goal), "#2a2")] {
        if let Some(p) = p {
            let (x, y) = frame.map(p);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{colour}"/>"#);
        }
    }
    s + "</svg>\n"
}

/// h, min b and min h_j against time.
pub fn barriers_svg(log: &TrajectoryLog) -> String {
    let series: [(&str, &str, Vec<[f64; 2]>); 3] = [
        ("h", "#1f5fbf", log.rows.iter().map(|r| [r.t, r.h]).collect()),
        ("min b", "#d07a00", log.rows.iter().map(|r| [r.t, r.min_b]).collect()),
        ("min h_j", "#2a2", log.rows.iter().map(|r| [r.t, r.min_h]).collect()),
    ];
    let frame = Frame::fit(series.iter().flat_map(|(_, _, p)| p.iter().copied()).chain([[0.0, 0.0]]), false);
    let mut s = open();
    frame.axes(&mut s, "t [s]", "value");
    let zero = [[frame.lo[0], 0.0], [frame.hi[0], 0.0]];
    frame.polyline(&mut s, &zero, r##"stroke="#999" stroke-dasharray="4 3""##);
    for (i, (name, colour, pts)) in series.iter().enumerate() {
        frame.polyline(&mut s, pts, &format!(r#"stroke="{colour}" stroke-width="1.5""#));
        let y = PAD + 14.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}" font-size="12" fill="{colour}">{name}</text>"#, W - PAD - 70.0);
    }
    s + "</svg>\n"
}
