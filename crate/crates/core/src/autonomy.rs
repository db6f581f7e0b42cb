//! Cone-lane autonomy: detections to ground-plane cone positions, boundary
//! fits and a lookahead target, then pure-pursuit steering with a
//! proportional speed loop.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::sensors::{CameraModel, ConeColor, Detection};
use crate::twin::{ActuationCommand, VehicleState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutonomyError {
    #[error("detection bottom row {v_bottom} is at or above the horizon (cy = {cy})")]
    DegenerateRow { v_bottom: f64, cy: f64 },
}

/// A cone in the vehicle frame (x forward, y left).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeEstimate {
    pub x_m: f64,
    pub y_m: f64,
    pub label: ConeColor,
}

impl ConeEstimate {
    pub fn mirrored(&self) -> Self {
        Self {
            x_m: self.x_m,
            y_m: -self.y_m,
            label: self.label.swapped(),
        }
    }
}

/// Back-projects the bottom-center pixel of a box onto the ground plane.
pub fn estimate_cone_position(
    det: &Detection,
    cam: &CameraModel,
) -> Result<ConeEstimate, AutonomyError> {
    let u_b = 0.5 * (det.u_min + det.u_max);
    let v_b = det.v_max;
    if v_b <= cam.cy + 1.0 {
        return Err(AutonomyError::DegenerateRow {
            v_bottom: v_b,
            cy: cam.cy,
        });
    }
    let depth = cam.fy * cam.mount_height_m / (v_b - cam.cy);
    let lateral = (u_b - cam.cx) * depth / cam.fx;
    Ok(ConeEstimate {
        x_m: depth + cam.mount_x_m,
        y_m: -lateral,
        label: det.label,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerParams {
    pub lookahead_m: f64,
    pub poly_degree: usize,
    pub min_per_side: usize,
    pub lane_halfwidth_m: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            lookahead_m: 2.0,
            poly_degree: 2,
            min_per_side: 2,
            lane_halfwidth_m: 0.5,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lookahead_m > 0.0 && self.lookahead_m.is_finite()) {
            return Err("lookahead_m must be positive".into());
        }
        if self.min_per_side == 0 {
            return Err("min_per_side must be at least 1".into());
        }
        if !(self.lane_halfwidth_m >= 0.0 && self.lane_halfwidth_m.is_finite()) {
            return Err("lane_halfwidth_m must be finite and non-negative".into());
        }
        Ok(())
    }
}

/// Boundary fits and target point for one frame. Coefficients are lowest
/// degree first, describing y(x) in the vehicle frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub left_coeffs: Option<Vec<f64>>,
    pub right_coeffs: Option<Vec<f64>>,
    pub target_x_m: f64,
    pub target_y_m: f64,
    pub valid: bool,
}

impl Plan {
    pub fn invalid() -> Self {
        Self {
            left_coeffs: None,
            right_coeffs: None,
            target_x_m: 0.0,
            target_y_m: 0.0,
            valid: false,
        }
    }

    pub fn target(&self) -> Option<(f64, f64)> {
        self.valid.then_some((self.target_x_m, self.target_y_m))
    }
}

/// Evaluates a lowest-degree-first polynomial by Horner's rule.
pub fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Least-squares polynomial fit of the given degree via SVD. Rank-deficient
/// systems (repeated abscissae) yield the minimum-norm solution; non-finite
/// input yields NaN coefficients.
pub fn poly_fit(xs: &[f64], ys: &[f64], degree: usize) -> Vec<f64> {
    assert_eq!(xs.len(), ys.len());
    if !xs.iter().chain(ys).all(|v| v.is_finite()) {
        return vec![f64::NAN; degree + 1];
    }
    let cols = degree + 1;
    let a = DMatrix::from_fn(xs.len(), cols, |r, c| xs[r].powi(c as i32));
    let b = DVector::from_column_slice(ys);
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = max_sv * f64::EPSILON * (xs.len().max(cols) as f64);
    let sol = svd
        .solve(&b, eps)
        .expect("both singular vector sets were computed");
    sol.iter().copied().collect()
}

fn fit_side(cones: &[ConeEstimate], label: ConeColor, params: &PlannerParams) -> Option<Vec<f64>> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = cones
        .iter()
        .filter(|c| c.label == label && c.x_m > 0.0 && c.x_m.is_finite() && c.y_m.is_finite())
        .map(|c| (c.x_m, c.y_m))
        .unzip();
    if xs.is_empty() || xs.len() < params.min_per_side {
        return None;
    }
    let degree = params.poly_degree.min(xs.len() - 1);
    Some(poly_fit(&xs, &ys, degree))
}

/// Fits each boundary and places the target on the lane centerline at the
/// lookahead distance. Red cones bound the left side, green the right.
/// Estimates that are not finite or not ahead of the vehicle are ignored.
pub fn plan(cones: &[ConeEstimate], params: &PlannerParams) -> Plan {
    let left = fit_side(cones, ConeColor::Red, params);
    let right = fit_side(cones, ConeColor::Green, params);
    let x = params.lookahead_m;
    let target_y = match (&left, &right) {
        (Some(l), Some(r)) => 0.5 * (poly_eval(l, x) + poly_eval(r, x)),
        (Some(l), None) => poly_eval(l, x) - params.lane_halfwidth_m,
        (None, Some(r)) => poly_eval(r, x) + params.lane_halfwidth_m,
        (None, None) => return Plan::invalid(),
    };
    Plan {
        left_coeffs: left,
        right_coeffs: right,
        target_x_m: x,
        target_y_m: target_y,
        valid: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub target_speed_mps: f64,
    pub kp_speed: f64,
    pub wheelbase_m: f64,
    pub max_steer_rad: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            target_speed_mps: 1.5,
            kp_speed: 0.8,
            wheelbase_m: 0.47,
            max_steer_rad: 0.44,
        }
    }
}

/// Pure-pursuit wheel angle that puts the vehicle on an arc through the
/// target point.
pub fn pure_pursuit_angle(target_x: f64, target_y: f64, wheelbase_m: f64) -> f64 {
    let alpha = target_y.atan2(target_x);
    let lookahead = target_x.hypot(target_y);
    if lookahead == 0.0 {
        return 0.0;
    }
    (2.0 * wheelbase_m * alpha.sin() / lookahead).atan()
}

pub fn control(plan: &Plan, state: &VehicleState, params: &ControlParams) -> ActuationCommand {
    let Some((tx, ty)) = plan.target() else {
        return ActuationCommand::safe_stop();
    };
    let delta = pure_pursuit_angle(tx, ty, params.wheelbase_m);
    let error = params.target_speed_mps - state.speed_mps;
    ActuationCommand::new(
        params.kp_speed * error,
        -params.kp_speed * error,
        delta / params.max_steer_rad,
    )
}

/// What the planner saw and decided for one sensor frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    pub cones: Vec<ConeEstimate>,
    pub plan: Plan,
}

/// The full per-frame pipeline with its configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pipeline {
    pub camera: CameraModel,
    pub planner: PlannerParams,
    pub control: ControlParams,
}

impl Pipeline {
    /// Detections plus measured speed to a command. Detections that cannot
    /// be placed on the ground plane are skipped.
    pub fn process(&self, dets: &[Detection], speed_mps: f64) -> (ActuationCommand, PlanDiagnostics) {
        let cones: Vec<ConeEstimate> = dets
            .iter()
            .filter_map(|d| estimate_cone_position(d, &self.camera).ok())
            .collect();
        let plan = plan(&cones, &self.planner);
        let state = VehicleState {
            speed_mps,
            ..VehicleState::default()
        };
        let cmd = control(&plan, &state, &self.control);
        (cmd, PlanDiagnostics { cones, plan })
    }
}
