//! Run metrics computed from a log and the course.

use serde::{Deserialize, Serialize};

use crate::config::{cone_pairs, RunLogRecord};
use crate::sensors::{world_to_vehicle, Cone};
use crate::twin::{ChassisParams, VehicleState};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub completed: bool,
    pub steps: u64,
    pub cones_struck: usize,
    pub max_cross_track_m: Option<f64>,
    pub mean_cross_track_m: Option<f64>,
    pub min_cone_clearance_m: Option<f64>,
    pub wall_time_s: f64,
}

/// The course as the metrics see it.
#[derive(Debug, Clone, PartialEq)]
pub struct Course {
    pub cones: Vec<Cone>,
    pub centerline: Vec<(f64, f64)>,
    /// Left and right cone of the finish gate.
    pub gate: Option<((f64, f64), (f64, f64))>,
}

impl Course {
    pub fn new(cones: &[Cone], finish_pair: Option<usize>) -> Self {
        let pairs = cone_pairs(cones);
        let centerline = pairs
            .iter()
            .map(|(l, r)| ((l.x_m + r.x_m) / 2.0, (l.y_m + r.y_m) / 2.0))
            .collect();
        let gate = pairs
            .len()
            .checked_sub(1)
            .map(|last| finish_pair.unwrap_or(last))
            .and_then(|i| pairs.get(i))
            .map(|(l, r)| ((l.x_m, l.y_m), (r.x_m, r.y_m)));
        Self {
            cones: cones.to_vec(),
            centerline,
            gate,
        }
    }

    pub fn from_scenario(s: &crate::config::Scenario) -> Self {
        Self::new(&s.course, s.finish_pair)
    }

    /// Perpendicular distance to the centerline. The first and last segments
    /// extend indefinitely so the approach and run-out are measured against
    /// the lane direction rather than the end points.
    pub fn cross_track(&self, x: f64, y: f64) -> Option<f64> {
        let pts = &self.centerline;
        match pts.len() {
            0 => None,
            1 => Some((x - pts[0].0).hypot(y - pts[0].1)),
            n => {
                let mut best = f64::INFINITY;
                for i in 0..n - 1 {
                    let lo = if i == 0 { f64::NEG_INFINITY } else { 0.0 };
                    let hi = if i == n - 2 { f64::INFINITY } else { 1.0 };
                    best = best.min(segment_distance(pts[i], pts[i + 1], (x, y), lo, hi));
                }
                Some(best)
            }
        }
    }

    /// True when the move from `a` to `b` crosses the finish gate while
    /// heading forward through it.
    pub fn crosses_gate(&self, a: &VehicleState, b: &VehicleState) -> bool {
        let Some((l, r)) = self.gate else {
            return false;
        };
        // Gate normal pointing in the direction of travel: left-to-right
        // edge rotated a quarter turn counter-clockwise.
        let normal = (-(r.1 - l.1), r.0 - l.0);
        let aligned = b.yaw_rad.cos() * normal.0 + b.yaw_rad.sin() * normal.1 > 0.0;
        aligned && segments_intersect((a.x_m, a.y_m), (b.x_m, b.y_m), l, r)
    }
}

fn segment_distance(a: (f64, f64), b: (f64, f64), p: (f64, f64), lo: f64, hi: f64) -> f64 {
    let d = (b.0 - a.0, b.1 - a.1);
    let len2 = d.0 * d.0 + d.1 * d.1;
    if len2 == 0.0 {
        return (p.0 - a.0).hypot(p.1 - a.1);
    }
    let t = ((p.0 - a.0) * d.0 + (p.1 - a.1) * d.1) / len2;
    if t < lo {
        return (p.0 - (a.0 + lo * d.0)).hypot(p.1 - (a.1 + lo * d.1));
    }
    if t > hi {
        return (p.0 - (a.0 + hi * d.0)).hypot(p.1 - (a.1 + hi * d.1));
    }
    // Cross-product form: exactly zero for points on the segment's line.
    cross(a, b, p).abs() / len2.sqrt()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn segments_intersect(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    d1 * d2 <= 0.0 && d3 * d4 <= 0.0 && !(d1 == 0.0 && d2 == 0.0)
}

/// Signed gap between the footprint rectangle (wheelbase by track, centred
/// on the pose) and a cone's disc; zero or negative means contact.
pub fn footprint_clearance(state: &VehicleState, chassis: &ChassisParams, cone: &Cone) -> f64 {
    let (x, y) = world_to_vehicle(state, cone.x_m, cone.y_m);
    let dx = (x.abs() - chassis.wheelbase_m / 2.0).max(0.0);
    let dy = (y.abs() - chassis.track_m / 2.0).max(0.0);
    dx.hypot(dy) - cone.radius_m
}

pub fn strikes<'a>(state: &VehicleState, chassis: &ChassisParams, cones: &'a [Cone]) -> impl Iterator<Item = usize> + 'a {
    let state = *state;
    let chassis = *chassis;
    cones
        .iter()
        .enumerate()
        .filter(move |(_, c)| footprint_clearance(&state, &chassis, c) <= 0.0)
        .map(|(i, _)| i)
}

/// Aggregates a log into a report. `wall_time_s` is left at zero.
pub fn metrics(log: &[RunLogRecord], course: &Course, chassis: &ChassisParams) -> Result<RunReport, HarnessError> {
    let first = log.first().ok_or(HarnessError::EmptyLog)?;
    let last = log.last().expect("non-empty");

    let mut struck = vec![false; course.cones.len()];
    let mut min_clear: Option<f64> = None;
    let mut xte_sum = 0.0;
    let mut xte_max: Option<f64> = None;
    let mut completed = false;
    let mut prev: Option<&VehicleState> = None;

    for rec in log {
        let s = &rec.state;
        for (i, cone) in course.cones.iter().enumerate() {
            let c = footprint_clearance(s, chassis, cone);
            if c <= 0.0 {
                struck[i] = true;
            }
            let c = c.max(0.0);
            min_clear = Some(min_clear.map_or(c, |m: f64| m.min(c)));
        }
        if let Some(e) = course.cross_track(s.x_m, s.y_m) {
            xte_sum += e;
            xte_max = Some(xte_max.map_or(e, |m: f64| m.max(e)));
        }
        if let Some(p) = prev {
            completed |= course.crosses_gate(p, s);
        }
        prev = Some(s);
    }

    Ok(RunReport {
        completed,
        steps: last.step - first.step,
        cones_struck: struck.iter().filter(|&&b| b).count(),
        max_cross_track_m: xte_max,
        mean_cross_track_m: xte_max.map(|_| xte_sum / log.len() as f64),
        min_cone_clearance_m: min_clear,
        wall_time_s: 0.0,
    })
}
