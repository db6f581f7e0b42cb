//! Measurement procedures shared by the integration tests and the
//! acceptance suite.

use std::thread;
use std::time::Duration;

use cosim::autonomy::{control, estimate_cone_position, plan, ConeEstimate, ControlParams, Plan, PlannerParams};
use cosim::bridge::{memory_pair, Handshake, Session, SyncPolicy};
use cosim::sensors::{project_cone, world_to_vehicle, CameraModel, Cone, ConeColor};
use cosim::twin::{motor_force, resistance_force, step, ActuationCommand, ChassisParams, MotorParams, VehicleState};
use cosim::wire::MessageEnvelope;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::kasa_circle_fit;

/// Throttle that holds `speed` steady against resistance.
fn trim_throttle(speed: f64, chassis: &ChassisParams, motor: &MotorParams) -> f64 {
    resistance_force(speed, chassis) / motor_force(1.0, speed, motor)
}

/// Constant full-lock turn at trimmed speed; returns the best-fit radius
/// over the path after the first second.
pub fn full_lock_circle_radius(dt: f64) -> f64 {
    let (chassis, motor) = (ChassisParams::default(), MotorParams::default());
    let v = 1.0;
    let cmd = ActuationCommand::new(trim_throttle(v, &chassis, &motor), 0.0, 1.0);
    let mut s = VehicleState {
        speed_mps: v,
        ..VehicleState::default()
    };
    let mut pts = Vec::new();
    let n = (12.0 / dt).round() as usize;
    for i in 0..n {
        s = step(&s, &cmd, dt, &chassis, &motor).unwrap();
        if i as f64 * dt >= 1.0 {
            pts.push((s.x_m, s.y_m));
        }
    }
    kasa_circle_fit(&pts).2
}

/// A 10 s maneuver with piecewise-constant inputs changing on 0.1 s
/// boundaries, so every step size sees the same input history.
pub fn canonical_maneuver(dt: f64) -> VehicleState {
    let (chassis, motor) = (ChassisParams::default(), MotorParams::default());
    let mut s = VehicleState::default();
    let n = (10.0 / dt).round() as u64;
    let per_segment = (0.1 / dt).round() as u64;
    for i in 0..n {
        let t = (i / per_segment) as f64 * 0.1;
        let cmd = if t < 2.0 {
            ActuationCommand::new(0.6, 0.0, 0.0)
        } else if t < 5.0 {
            ActuationCommand::new(0.3, 0.0, 0.6)
        } else if t < 8.0 {
            ActuationCommand::new(0.3, 0.0, -0.4 + 0.1 * (t - 5.0))
        } else {
            ActuationCommand::new(0.0, 0.2, 0.2)
        };
        s = step(&s, &cmd, dt, &chassis, &motor).unwrap();
    }
    s
}

pub fn pose_change(a: &VehicleState, b: &VehicleState) -> f64 {
    let d = ((a.x_m - b.x_m).powi(2) + (a.y_m - b.y_m).powi(2) + (a.yaw_rad - b.yaw_rad).powi(2)).sqrt();
    let size = (a.x_m.powi(2) + a.y_m.powi(2) + a.yaw_rad.powi(2)).sqrt();
    d / size
}

/// Draws random poses and cones until `n` cones project fully inside the
/// image, then returns the worst round-trip position error.
pub fn round_trip_max_error(n: usize, seed: u64) -> f64 {
    let cam = CameraModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < n {
        let state = VehicleState::at_pose(
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-3.14..3.14),
        );
        let range = rng.gen_range(0.6..12.0);
        let bearing = rng.gen_range(-0.45..0.45f64);
        let (s, c) = (state.yaw_rad + bearing).sin_cos();
        let cone = Cone::new(state.x_m + range * c, state.y_m + range * s, ConeColor::Red);
        let Some(det) = project_cone(&state, &cam, &cone) else {
            continue;
        };
        let inside = det.u_min > 0.0
            && det.v_min > 0.0
            && det.u_max < f64::from(cam.width)
            && det.v_max < f64::from(cam.height);
        if !inside {
            continue;
        }
        let est = estimate_cone_position(&det, &cam).unwrap();
        let (xv, yv) = world_to_vehicle(&state, cone.x_m, cone.y_m);
        worst = worst.max((est.x_m - xv).hypot(est.y_m - yv));
        assert_eq!(est.label, cone.color);
        done += 1;
    }
    worst
}

/// Steering for a cone set and its mirror image.
pub fn mirrored_steering(cones: &[ConeEstimate]) -> (Plan, Plan, ActuationCommand, ActuationCommand) {
    let params = PlannerParams::default();
    let ctrl = ControlParams::default();
    let mirror: Vec<ConeEstimate> = cones.iter().map(ConeEstimate::mirrored).collect();
    let (a, b) = (plan(cones, &params), plan(&mirror, &params));
    let state = VehicleState::default();
    let (ca, cb) = (control(&a, &state, &ctrl), control(&b, &state, &ctrl));
    (a, b, ca, cb)
}

/// Runs `steps` lock-step exchanges with varied traffic and returns both
/// sides' received transcripts.
pub fn lock_step_run(steps: u64) -> (Vec<MessageEnvelope>, Vec<MessageEnvelope>) {
    let (a, b) = sim_auto();
    let (sim, auto) = pair(a, b);
    let dt = 0.01;
    let mut sim = sim.with_sync(SyncPolicy::lock_step(dt));
    let mut auto = auto.with_sync(SyncPolicy::lock_step(dt));
    let peer = thread::spawn(move || {
        let mut seen = Vec::new();
        for k in 0..steps {
            let out: Vec<(String, Value)> = if k % 3 == 0 {
                Vec::new()
            } else {
                vec![("/cmd".into(), json!({ "k": k }))]
            };
            seen.extend(auto.step_exchange(&out, k as f64 * dt).unwrap());
        }
        (seen, auto.close())
    });
    let mut seen = Vec::new();
    for k in 0..steps {
        let mut out = vec![("/state".to_string(), json!({ "k": k }))];
        if k % 10 == 0 {
            out.push(("/frame".into(), json!({ "frame": k / 10 })));
        }
        seen.extend(sim.step_exchange(&out, k as f64 * dt).unwrap());
    }
    let sim_stats = sim.close();
    let (auto_seen, auto_stats) = peer.join().unwrap();
    assert_eq!(sim_stats.steps, steps);
    assert_eq!(auto_stats.steps, steps);
    (seen, auto_seen)
}

const HANDSHAKE_WAIT: Duration = Duration::from_secs(10);

pub fn pair(a: Handshake, b: Handshake) -> (Session, Session) {
    let (ta, tb) = memory_pair();
    let h = thread::spawn(move || Session::establish_over(tb, b, HANDSHAKE_WAIT, HANDSHAKE_WAIT).unwrap());
    let sa = Session::establish_over(ta, a, HANDSHAKE_WAIT, HANDSHAKE_WAIT).unwrap();
    (sa, h.join().unwrap())
}

pub fn sim_auto() -> (Handshake, Handshake) {
    (
        Handshake::new("sim")
            .publishes("/state", "S")
            .publishes("/frame", "F")
            .subscribes("/cmd", "C"),
        Handshake::new("auto")
            .publishes("/cmd", "C")
            .subscribes("/state", "S")
            .subscribes("/frame", "F"),
    )
}
