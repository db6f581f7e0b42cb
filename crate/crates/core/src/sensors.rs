//! Synthetic sensors: an oracle cone detector built on a pinhole camera and
//! a single-ring planar lidar.
//!
//! Vehicle frame is x forward, y left, z up. The camera looks along the
//! vehicle heading with zero pitch; camera frame is X right, Y down, Z forward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::twin::VehicleState;

/// Cones whose base center is closer than this to the image plane are not
/// projected.
pub const MIN_DEPTH_M: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub mount_x_m: f64,
    pub mount_height_m: f64,
    pub noise_px: f64,
    pub miss_rate: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fx: 600.0,
            fy: 600.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
            mount_x_m: 0.0,
            mount_height_m: 0.2,
            noise_px: 0.0,
            miss_rate: 0.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err("fx and fy must be positive".into());
        }
        if !(self.cx >= 0.0 && self.cx < f64::from(self.width)) {
            return Err(format!("cx must lie in [0, {})", self.width));
        }
        if !(self.cy >= 0.0 && self.cy < f64::from(self.height)) {
            return Err(format!("cy must lie in [0, {})", self.height));
        }
        if !(self.noise_px >= 0.0 && self.noise_px.is_finite()) {
            return Err("noise_px must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&self.miss_rate) {
            return Err("miss_rate must lie in [0, 1)".into());
        }
        if !(self.mount_height_m > 0.0 && self.mount_height_m.is_finite()) {
            return Err("mount_height_m must be positive".into());
        }
        if !self.mount_x_m.is_finite() {
            return Err("mount_x_m must be finite".into());
        }
        Ok(())
    }

    /// Pixel coordinates of a camera-frame point.
    pub fn project(&self, x_right: f64, y_down: f64, z_fwd: f64) -> (f64, f64) {
        (
            self.cx + self.fx * x_right / z_fwd,
            self.cy + self.fy * y_down / z_fwd,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeColor {
    /// Left lane boundary.
    Red,
    /// Right lane boundary.
    Green,
}

impl ConeColor {
    pub fn swapped(self) -> Self {
        match self {
            ConeColor::Red => ConeColor::Green,
            ConeColor::Green => ConeColor::Red,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cone {
    pub x_m: f64,
    pub y_m: f64,
    pub color: ConeColor,
    #[serde(default = "default_cone_height")]
    pub height_m: f64,
    #[serde(default = "default_cone_radius")]
    pub radius_m: f64,
}

fn default_cone_height() -> f64 {
    0.3
}

fn default_cone_radius() -> f64 {
    0.08
}

impl Cone {
    pub fn new(x_m: f64, y_m: f64, color: ConeColor) -> Self {
        Self {
            x_m,
            y_m,
            color,
            height_m: default_cone_height(),
            radius_m: default_cone_radius(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.x_m.is_finite() && self.y_m.is_finite()) {
            return Err("cone position must be finite".into());
        }
        if !(self.height_m > 0.0 && self.radius_m > 0.0) {
            return Err("cone height_m and radius_m must be positive".into());
        }
        Ok(())
    }
}

/// A pixel bounding box with class and confidence. One element of a
/// `Detections2D` payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
    pub label: ConeColor,
    pub confidence: f64,
}

impl Detection {
    pub fn is_well_formed(&self, cam: &CameraModel) -> bool {
        self.u_min < self.u_max
            && self.v_min < self.v_max
            && self.u_min >= 0.0
            && self.v_min >= 0.0
            && self.u_max <= f64::from(cam.width)
            && self.v_max <= f64::from(cam.height)
    }

    pub fn height_px(&self) -> f64 {
        self.v_max - self.v_min
    }

    fn clipped(mut self, cam: &CameraModel) -> Option<Self> {
        let (w, h) = (f64::from(cam.width), f64::from(cam.height));
        self.u_min = self.u_min.clamp(0.0, w);
        self.u_max = self.u_max.clamp(0.0, w);
        self.v_min = self.v_min.clamp(0.0, h);
        self.v_max = self.v_max.clamp(0.0, h);
        (self.u_min < self.u_max && self.v_min < self.v_max).then_some(self)
    }
}

fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Rounds boxes to integer pixels (half-up) as they leave the sensor, drops
/// boxes that collapse, and restores the deterministic ordering.
pub fn emit_detections(dets: &[Detection]) -> Vec<Detection> {
    let mut out: Vec<Detection> = dets
        .iter()
        .map(|d| Detection {
            u_min: round_half_up(d.u_min),
            v_min: round_half_up(d.v_min),
            u_max: round_half_up(d.u_max),
            v_max: round_half_up(d.v_max),
            ..*d
        })
        .filter(|d| d.u_min < d.u_max && d.v_min < d.v_max)
        .collect();
    sort_detections(&mut out);
    out
}

fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        a.u_min
            .total_cmp(&b.u_min)
            .then(a.v_min.total_cmp(&b.v_min))
            .then(a.u_max.total_cmp(&b.u_max))
            .then(a.v_max.total_cmp(&b.v_max))
            .then(a.label.cmp(&b.label))
    });
}

/// Position of a world point in the vehicle frame.
pub fn world_to_vehicle(state: &VehicleState, x_m: f64, y_m: f64) -> (f64, f64) {
    let (dx, dy) = (x_m - state.x_m, y_m - state.y_m);
    let (s, c) = state.yaw_rad.sin_cos();
    (c * dx + s * dy, -s * dx + c * dy)
}

/// Noiseless projection of one cone, or `None` when it is not visible.
pub fn project_cone(state: &VehicleState, cam: &CameraModel, cone: &Cone) -> Option<Detection> {
    let (xv, yv) = world_to_vehicle(state, cone.x_m, cone.y_m);
    let depth = xv - cam.mount_x_m;
    if depth <= MIN_DEPTH_M {
        return None;
    }
    let right = -yv;
    let ground = cam.mount_height_m;
    let (u_c, v_base) = cam.project(right, ground, depth);
    let (u_l, _) = cam.project(right - cone.radius_m, ground, depth);
    let (u_r, _) = cam.project(right + cone.radius_m, ground, depth);
    let (_, v_apex) = cam.project(right, ground - cone.height_m, depth);
    let det = Detection {
        u_min: u_l.min(u_c).min(u_r),
        v_min: v_apex.min(v_base),
        u_max: u_l.max(u_c).max(u_r),
        v_max: v_apex.max(v_base),
        label: cone.color,
        confidence: 1.0,
    };
    det.clipped(cam)
}

/// Oracle detector: projects every cone, drops each with `miss_rate`, and
/// jitters box corners with Gaussian pixel noise. Boxes stay real-valued;
/// see [`emit_detections`].
pub fn detect(state: &VehicleState, cam: &CameraModel, cones: &[Cone], seed: u64) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (cam.noise_px > 0.0).then(|| Normal::new(0.0, cam.noise_px).expect("finite sigma"));
    let mut out = Vec::new();
    for cone in cones {
        let Some(mut det) = project_cone(state, cam, cone) else {
            continue;
        };
        if rng.gen::<f64>() < cam.miss_rate {
            continue;
        }
        if let Some(n) = &noise {
            det.u_min += n.sample(&mut rng);
            det.v_min += n.sample(&mut rng);
            det.u_max += n.sample(&mut rng);
            det.v_max += n.sample(&mut rng);
            match det.clipped(cam) {
                Some(d) => det = d,
                None => continue,
            }
        }
        out.push(det);
    }
    sort_detections(&mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarParams {
    pub beams: u32,
    pub fov_rad: f64,
    pub max_range_m: f64,
    pub noise_m: f64,
    pub mount_x_m: f64,
}

impl Default for LidarParams {
    fn default() -> Self {
        Self {
            beams: 181,
            fov_rad: std::f64::consts::PI,
            max_range_m: 10.0,
            noise_m: 0.0,
            mount_x_m: 0.0,
        }
    }
}

impl LidarParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.beams == 0 {
            return Err("beams must be at least 1".into());
        }
        if !(self.fov_rad > 0.0 && self.fov_rad <= std::f64::consts::TAU) {
            return Err("fov_rad must lie in (0, 2pi]".into());
        }
        if !(self.max_range_m > 0.0 && self.max_range_m.is_finite()) {
            return Err("max_range_m must be positive".into());
        }
        if !(self.noise_m >= 0.0 && self.noise_m.is_finite()) {
            return Err("noise_m must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Beam bearing relative to the heading; beams are centered in equal
    /// sectors across the field of view.
    pub fn beam_angle(&self, i: u32) -> f64 {
        -0.5 * self.fov_rad + self.fov_rad * (f64::from(i) + 0.5) / f64::from(self.beams)
    }
}

/// `LaserScan` payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserScan {
    pub fov: f64,
    pub ranges: Vec<f64>,
}

/// Distance along a unit ray to the first point of a disc, if any.
pub fn ray_circle(origin: (f64, f64), dir: (f64, f64), center: (f64, f64), radius: f64) -> Option<f64> {
    let f = (origin.0 - center.0, origin.1 - center.1);
    let b = f.0 * dir.0 + f.1 * dir.1;
    let c = f.0 * f.0 + f.1 * f.1 - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let near = -b - root;
    if near >= 0.0 {
        Some(near)
    } else if -b + root >= 0.0 {
        // origin inside the disc
        Some(0.0)
    } else {
        None
    }
}

pub fn lidar_scan(state: &VehicleState, params: &LidarParams, cones: &[Cone], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (params.noise_m > 0.0).then(|| Normal::new(0.0, params.noise_m).expect("finite sigma"));
    let (s, c) = state.yaw_rad.sin_cos();
    let origin = (state.x_m + params.mount_x_m * c, state.y_m + params.mount_x_m * s);
    (0..params.beams)
        .map(|i| {
            let (bs, bc) = (state.yaw_rad + params.beam_angle(i)).sin_cos();
            let hit = cones
                .iter()
                .filter_map(|cone| ray_circle(origin, (bc, bs), (cone.x_m, cone.y_m), cone.radius_m))
                .fold(params.max_range_m, f64::min);
            let noisy = match &noise {
                Some(n) => hit + n.sample(&mut rng),
                None => hit,
            };
            noisy.clamp(1e-6, params.max_range_m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ahead(range: f64) -> Cone {
        Cone::new(range, 0.0, ConeColor::Red)
    }

    #[test]
    fn dead_ahead_worked_example() {
        let cam = CameraModel::default();
        let det = project_cone(&VehicleState::default(), &cam, &ahead(3.0)).unwrap();
        // base row: cy + fy * h / Z
        assert_eq!(det.v_max, 240.0 + 600.0 * 0.2 / 3.0);
        assert!((0.5 * (det.u_min + det.u_max) - 320.0).abs() < 1e-12);
        assert_eq!(det.confidence, 1.0);
        assert_eq!(det.label, ConeColor::Red);
    }

    #[test]
    fn behind_and_out_of_view_are_absent() {
        let cam = CameraModel::default();
        let s = VehicleState::default();
        assert!(project_cone(&s, &cam, &ahead(-1.0)).is_none());
        assert!(project_cone(&s, &cam, &ahead(0.05)).is_none());
        assert!(project_cone(&s, &cam, &Cone::new(1.0, 5.0, ConeColor::Red)).is_none());
    }

    #[test]
    fn box_height_shrinks_with_range() {
        let cam = CameraModel::default();
        let s = VehicleState::default();
        let mut last = f64::INFINITY;
        for i in 0..40 {
            let h = project_cone(&s, &cam, &ahead(1.0 + 0.25 * f64::from(i)))
                .unwrap()
                .height_px();
            assert!(h < last);
            last = h;
        }
    }

    #[test]
    fn noiseless_detect_equals_projection() {
        let cam = CameraModel::default();
        let s = VehicleState::default();
        let cones = [
            Cone::new(3.0, 0.5, ConeColor::Red),
            Cone::new(3.0, -0.5, ConeColor::Green),
            Cone::new(6.0, 0.4, ConeColor::Red),
        ];
        let mut expected: Vec<_> = cones.iter().filter_map(|c| project_cone(&s, &cam, c)).collect();
        sort_detections(&mut expected);
        assert_eq!(detect(&s, &cam, &cones, 42), expected);
    }

    #[test]
    fn detect_is_deterministic_and_sorted() {
        let cam = CameraModel {
            noise_px: 2.0,
            miss_rate: 0.2,
            ..CameraModel::default()
        };
        let cones: Vec<_> = (0..12)
            .map(|i| Cone::new(2.0 + f64::from(i) * 0.7, if i % 2 == 0 { 0.5 } else { -0.5 }, ConeColor::Red))
            .collect();
        let s = VehicleState::default();
        let a = detect(&s, &cam, &cones, 9);
        assert_eq!(a, detect(&s, &cam, &cones, 9));
        assert!(a.windows(2).all(|w| w[0].u_min <= w[1].u_min));
        assert!(a.iter().all(|d| d.is_well_formed(&cam)));
    }

    #[test]
    fn emission_rounds_half_up() {
        let d = Detection {
            u_min: 10.5,
            v_min: 2.49,
            u_max: 12.2,
            v_max: 3.5,
            label: ConeColor::Green,
            confidence: 1.0,
        };
        let e = emit_detections(&[d]);
        assert_eq!((e[0].u_min, e[0].v_min, e[0].u_max, e[0].v_max), (11.0, 2.0, 12.0, 4.0));
        let collapsing = Detection { u_max: 11.2, ..d };
        assert!(emit_detections(&[collapsing]).is_empty());
    }

    #[test]
    fn lidar_examples() {
        let p = LidarParams {
            beams: 3,
            fov_rad: 1.0,
            max_range_m: 8.0,
            noise_m: 0.0,
            mount_x_m: 0.0,
        };
        let s = VehicleState::default();
        assert_eq!(lidar_scan(&s, &p, &[], 0), vec![8.0; 3]);
        let cone = Cone {
            radius_m: 0.1,
            ..ahead(2.0)
        };
        let r = lidar_scan(&s, &p, &[cone], 0);
        assert!((r[1] - 1.9).abs() < 1e-12);
        assert_eq!(r[0], 8.0);
        let behind = Cone {
            radius_m: 0.1,
            ..ahead(-2.0)
        };
        assert_eq!(lidar_scan(&s, &p, &[behind], 0), vec![8.0; 3]);
    }

    #[test]
    fn lidar_noise_stays_in_range() {
        let p = LidarParams {
            noise_m: 0.5,
            max_range_m: 3.0,
            ..LidarParams::default()
        };
        let cones = [ahead(0.2), ahead(2.9)];
        let r = lidar_scan(&VehicleState::default(), &p, &cones, 3);
        assert!(r.iter().all(|&v| v > 0.0 && v <= 3.0));
        assert_eq!(r, lidar_scan(&VehicleState::default(), &p, &cones, 3));
    }

    #[test]
    fn camera_validation() {
        assert!(CameraModel::default().validate().is_ok());
        let bad = CameraModel {
            miss_rate: 1.0,
            ..CameraModel::default()
        };
        assert!(bad.validate().is_err());
        let bad = CameraModel {
            cx: 640.0,
            ..CameraModel::default()
        };
        assert!(bad.validate().is_err());
    }
}
