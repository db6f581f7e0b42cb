//! Static SVG figures: the trajectory over the course and one plan figure
//! per sensor frame. Output depends only on the inputs, so the same log
//! always produces byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::autonomy::{poly_eval, PlanDiagnostics};
use crate::config::RunLogRecord;
use crate::sensors::{Cone, ConeColor};

use super::metrics::Course;
use super::HarnessError;

const SIZE_PX: f64 = 800.0;
const MARGIN_PX: f64 = 40.0;

fn color(c: ConeColor) -> &'static str {
    match c {
        ConeColor::Red => "#d62728",
        ConeColor::Green => "#2ca02c",
    }
}

/// World-to-pixel mapping with equal scale on both axes and y up.
struct Frame {
    x0: f64,
    y1: f64,
    scale: f64,
    height: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Frame {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
        }
        let span = (x1 - x0).max(y1 - y0).max(1e-3);
        let scale = (SIZE_PX - 2.0 * MARGIN_PX) / span;
        Frame {
            x0,
            y1,
            scale,
            height: (y1 - y0) * scale + 2.0 * MARGIN_PX,
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            MARGIN_PX + (x - self.x0) * self.scale,
            MARGIN_PX + (self.y1 - y) * self.scale,
        )
    }

    fn open(&self, out: &mut String, title: &str) {
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE_PX:.0}" height="{:.0}" viewBox="0 0 {SIZE_PX:.0} {:.0}">"#,
            self.height, self.height
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="10" y="20" font-family="monospace" font-size="14">{title}</text>"#);
    }

    fn polyline(&self, out: &mut String, pts: &[(f64, f64)], stroke: &str, width: f64, dash: bool) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (u, v) = self.px(x, y);
                format!("{u:.2},{v:.2}")
            })
            .collect();
        let dash = if dash { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"{dash}/>"#,
            coords.join(" ")
        );
    }

    fn circle(&self, out: &mut String, x: f64, y: f64, r_px: f64, fill: &str) {
        let (u, v) = self.px(x, y);
        let _ = writeln!(out, r#"<circle cx="{u:.2}" cy="{v:.2}" r="{r_px:.2}" fill="{fill}"/>"#);
    }
}

/// Trajectory over the course.
pub fn trajectory_svg(log: &[RunLogRecord], course: &Course) -> Result<String, HarnessError> {
    if log.is_empty() {
        return Err(HarnessError::EmptyLog);
    }
    let path: Vec<(f64, f64)> = log.iter().map(|r| (r.state.x_m, r.state.y_m)).collect();
    let frame = Frame::fit(
        path.iter()
            .copied()
            .chain(course.cones.iter().map(|c| (c.x_m, c.y_m))),
    );
    let mut out = String::new();
    frame.open(&mut out, "trajectory");
    frame.polyline(&mut out, &course.centerline, "#999999", 1.0, true);
    if let Some((l, r)) = course.gate {
        frame.polyline(&mut out, &[l, r], "#000000", 1.5, false);
    }
    for cone in &course.cones {
        frame.circle(&mut out, cone.x_m, cone.y_m, (cone.radius_m * frame.scale).max(2.0), color(cone.color));
    }
    frame.polyline(&mut out, &path, "#1f77b4", 2.0, false);
    frame.circle(&mut out, path[0].0, path[0].1, 4.0, "#000000");
    out.push_str("</svg>\n");
    Ok(out)
}

/// One planning frame in the vehicle frame: estimated cones, fitted
/// boundaries and the target point.
pub fn plan_svg(step: u64, diag: &PlanDiagnostics, lookahead_hint_m: f64) -> String {
    let x_max = diag
        .cones
        .iter()
        .map(|c| c.x_m)
        .fold(lookahead_hint_m.max(1.0), f64::max);
    let mut extent = vec![(0.0, -1.0), (x_max, 1.0)];
    extent.extend(diag.cones.iter().map(|c| (c.x_m, c.y_m)));
    let frame = Frame::fit(extent.into_iter());
    let mut out = String::new();
    frame.open(&mut out, &format!("plan step {step}"));
    let samples = |coeffs: &[f64]| -> Vec<(f64, f64)> {
        (0..=50)
            .map(|i| {
                let x = x_max * f64::from(i) / 50.0;
                (x, poly_eval(coeffs, x))
            })
            .collect()
    };
    if let Some(c) = &diag.plan.left_coeffs {
        frame.polyline(&mut out, &samples(c), color(ConeColor::Red), 1.5, false);
    }
    if let Some(c) = &diag.plan.right_coeffs {
        frame.polyline(&mut out, &samples(c), color(ConeColor::Green), 1.5, false);
    }
    for c in &diag.cones {
        frame.circle(&mut out, c.x_m, c.y_m, 6.0, color(c.label));
    }
    frame.circle(&mut out, 0.0, 0.0, 4.0, "#000000");
    if let Some((tx, ty)) = diag.plan.target() {
        frame.polyline(&mut out, &[(0.0, 0.0), (tx, ty)], "#1f77b4", 1.0, true);
        frame.circle(&mut out, tx, ty, 5.0, "#1f77b4");
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `trajectory.svg` plus `plan_NNNNNN.svg` for every record that
/// carries plan diagnostics, returning the written paths in order.
pub fn plot(log: &[RunLogRecord], cones: &[Cone], finish_pair: Option<usize>, lookahead_m: f64, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let course = Course::new(cones, finish_pair);
    let traj = trajectory_svg(log, &course)?;
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::Io(out_dir.to_owned(), e))?;
    let write = |name: String, body: &str| -> Result<PathBuf, HarnessError> {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(|e| HarnessError::Io(p.clone(), e))?;
        Ok(p)
    };
    let mut written = vec![write("trajectory.svg".into(), &traj)?];
    for rec in log {
        if let Some(diag) = &rec.plan {
            written.push(write(format!("plan_{:06}.svg", rec.step), &plan_svg(rec.step, diag, lookahead_m))?);
        }
    }
    Ok(written)
}
