//! Planar digital twin: linear steering map, lumped motor/ESC force and a
//! kinematic-bicycle chassis integrated with fixed-step RK4.

use serde::{Deserialize, Serialize};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TwinError {
    #[error("integration produced a non-finite state at t={sim_time_s}")]
    NonFiniteState { sim_time_s: f64 },
    #[error("zero steering angle has no finite turn radius")]
    ZeroSteer,
    #[error("invalid time step {0}")]
    InvalidStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChassisParams {
    pub wheelbase_m: f64,
    pub track_m: f64,
    pub mass_kg: f64,
    pub max_steer_rad: f64,
    pub c_rr: f64,
    pub c_drag: f64,
}

impl Default for ChassisParams {
    fn default() -> Self {
        Self {
            wheelbase_m: 0.47,
            track_m: 0.34,
            mass_kg: 12.0,
            max_steer_rad: 0.44,
            c_rr: 0.015,
            c_drag: 0.05,
        }
    }
}

impl ChassisParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("wheelbase_m", self.wheelbase_m),
            ("track_m", self.track_m),
            ("mass_kg", self.mass_kg),
            ("max_steer_rad", self.max_steer_rad),
            ("c_rr", self.c_rr),
            ("c_drag", self.c_drag),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be strictly positive, got {v}"));
            }
        }
        if self.max_steer_rad >= std::f64::consts::FRAC_PI_2 {
            return Err(format!(
                "max_steer_rad must be below pi/2, got {}",
                self.max_steer_rad
            ));
        }
        Ok(())
    }
}

/// Linear torque-speed curve referred to the wheel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorParams {
    #[serde(rename = "stall_torque_Nm")]
    pub stall_torque_nm: f64,
    pub no_load_speed_radps: f64,
    pub wheel_radius_m: f64,
    #[serde(rename = "brake_force_max_N")]
    pub brake_force_max_n: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        Self {
            stall_torque_nm: 3.0,
            no_load_speed_radps: 180.0,
            wheel_radius_m: 0.095,
            brake_force_max_n: 40.0,
        }
    }
}

impl MotorParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("stall_torque_Nm", self.stall_torque_nm),
            ("no_load_speed_radps", self.no_load_speed_radps),
            ("wheel_radius_m", self.wheel_radius_m),
            ("brake_force_max_N", self.brake_force_max_n),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be strictly positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn stall_force_n(&self) -> f64 {
        self.stall_torque_nm / self.wheel_radius_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x_m: f64,
    pub y_m: f64,
    pub yaw_rad: f64,
    pub speed_mps: f64,
    pub steer_rad: f64,
    pub sim_time_s: f64,
}

impl VehicleState {
    pub fn at_pose(x_m: f64, y_m: f64, yaw_rad: f64) -> Self {
        Self {
            x_m,
            y_m,
            yaw_rad,
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.x_m,
            self.y_m,
            self.yaw_rad,
            self.speed_mps,
            self.steer_rad,
            self.sim_time_s,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn kinetic_energy(&self, mass_kg: f64) -> f64 {
        0.5 * mass_kg * self.speed_mps * self.speed_mps
    }
}

/// Bridge form of a [`VehicleState`] (msg_type `VehicleState`); the
/// timestamp travels in the envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleStateMsg {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub speed: f64,
    pub steering: f64,
}

impl From<&VehicleState> for VehicleStateMsg {
    fn from(s: &VehicleState) -> Self {
        Self {
            x: s.x_m,
            y: s.y_m,
            yaw: s.yaw_rad,
            speed: s.speed_mps,
            steering: s.steer_rad,
        }
    }
}

impl VehicleStateMsg {
    pub fn into_state(self, sim_time_s: f64) -> VehicleState {
        VehicleState {
            x_m: self.x,
            y_m: self.y,
            yaw_rad: self.yaw,
            speed_mps: self.speed,
            steer_rad: self.steering,
            sim_time_s,
        }
    }
}

/// Normalized actuation. Out-of-range inputs are clamped on construction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, from = "RawCommand")]
pub struct ActuationCommand {
    pub throttle: f64,
    pub braking: f64,
    pub steering: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCommand {
    throttle: f64,
    braking: f64,
    steering: f64,
}

impl From<RawCommand> for ActuationCommand {
    fn from(r: RawCommand) -> Self {
        Self::new(r.throttle, r.braking, r.steering)
    }
}

fn clamp_or_zero(v: f64, lo: f64, hi: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(lo, hi)
    }
}

impl ActuationCommand {
    pub fn new(throttle: f64, braking: f64, steering: f64) -> Self {
        Self {
            throttle: clamp_or_zero(throttle, 0.0, 1.0),
            braking: clamp_or_zero(braking, 0.0, 1.0),
            steering: clamp_or_zero(steering, -1.0, 1.0),
        }
    }

    pub fn safe_stop() -> Self {
        Self::new(0.0, 1.0, 0.0)
    }

    pub fn is_in_range(&self) -> bool {
        (0.0..=1.0).contains(&self.throttle)
            && (0.0..=1.0).contains(&self.braking)
            && (-1.0..=1.0).contains(&self.steering)
    }
}

/// Front-wheel angle for a normalized steering input.
pub fn steering_map(steering: f64, chassis: &ChassisParams) -> f64 {
    chassis.max_steer_rad * steering.clamp(-1.0, 1.0)
}

/// Tractive force at the contact patch for the given throttle and speed.
pub fn motor_force(throttle: f64, speed_mps: f64, motor: &MotorParams) -> f64 {
    let omega = speed_mps / motor.wheel_radius_m;
    let fraction = (1.0 - omega / motor.no_load_speed_radps).max(0.0);
    throttle.clamp(0.0, 1.0) * motor.stall_force_n() * fraction
}

/// Rolling plus aerodynamic resistance, signed with the direction of travel.
pub fn resistance_force(speed_mps: f64, chassis: &ChassisParams) -> f64 {
    chassis.c_rr * chassis.mass_kg * GRAVITY * sign(speed_mps)
        + chassis.c_drag * speed_mps * speed_mps.abs()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Radius of the steady circle driven at wheel angle `delta_rad`.
pub fn steady_turn_radius(delta_rad: f64, chassis: &ChassisParams) -> Result<f64, TwinError> {
    if delta_rad == 0.0 {
        return Err(TwinError::ZeroSteer);
    }
    Ok(chassis.wheelbase_m / delta_rad.abs().tan())
}

#[derive(Clone, Copy)]
struct Deriv {
    x: f64,
    y: f64,
    yaw: f64,
    v: f64,
}

fn derivative(
    yaw: f64,
    v: f64,
    travel_dir: f64,
    tan_delta: f64,
    cmd: &ActuationCommand,
    chassis: &ChassisParams,
    motor: &MotorParams,
) -> Deriv {
    let (sin_yaw, cos_yaw) = yaw.sin_cos();
    let friction = (cmd.braking * motor.brake_force_max_n
        + chassis.c_rr * chassis.mass_kg * GRAVITY)
        * travel_dir;
    let force = motor_force(cmd.throttle, v, motor) - friction - chassis.c_drag * v * v.abs();
    Deriv {
        x: v * cos_yaw,
        y: v * sin_yaw,
        yaw: v * tan_delta / chassis.wheelbase_m,
        v: force / chassis.mass_kg,
    }
}

/// Advances the twin by one fixed RK4 step of `dt` seconds.
///
/// The steering angle is applied instantly and held for the step. When the
/// input time is a whole number of steps, the output time is recomputed as
/// `(n + 1) * dt` so long runs do not accumulate rounding drift.
pub fn step(
    state: &VehicleState,
    cmd: &ActuationCommand,
    dt: f64,
    chassis: &ChassisParams,
    motor: &MotorParams,
) -> Result<VehicleState, TwinError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(TwinError::InvalidStep(dt));
    }
    let cmd = ActuationCommand::new(cmd.throttle, cmd.braking, cmd.steering);
    let delta = steering_map(cmd.steering, chassis);
    let tan_delta = delta.tan();
    let (yaw0, v0) = (state.yaw_rad, state.speed_mps);
    // Coulomb terms keep the direction of travel at the start of the step so
    // the stages see a smooth right-hand side.
    let travel_dir = sign(v0);
    let f = |yaw: f64, v: f64| derivative(yaw, v, travel_dir, tan_delta, &cmd, chassis, motor);

    let k1 = f(yaw0, v0);
    let k2 = f(yaw0 + 0.5 * dt * k1.yaw, v0 + 0.5 * dt * k1.v);
    let k3 = f(yaw0 + 0.5 * dt * k2.yaw, v0 + 0.5 * dt * k2.v);
    let k4 = f(yaw0 + dt * k3.yaw, v0 + dt * k3.v);
    let blend = |a: f64, b: f64, c: f64, d: f64| dt / 6.0 * (a + 2.0 * b + 2.0 * c + d);

    let mut speed = v0 + blend(k1.v, k2.v, k3.v, k4.v);
    // Brakes and drag stop the vehicle; they never drive it backwards.
    let reversed = (v0 > 0.0 && speed < 0.0) || (v0 < 0.0 && speed > 0.0 && cmd.throttle == 0.0);
    if reversed {
        speed = 0.0;
    }

    let next = VehicleState {
        x_m: state.x_m + blend(k1.x, k2.x, k3.x, k4.x),
        y_m: state.y_m + blend(k1.y, k2.y, k3.y, k4.y),
        yaw_rad: yaw0 + blend(k1.yaw, k2.yaw, k3.yaw, k4.yaw),
        speed_mps: speed,
        steer_rad: delta,
        sim_time_s: next_time(state.sim_time_s, dt),
    };
    if !next.is_finite() {
        return Err(TwinError::NonFiniteState {
            sim_time_s: next.sim_time_s,
        });
    }
    Ok(next)
}

fn next_time(t: f64, dt: f64) -> f64 {
    let ticks = t / dt;
    let whole = ticks.round();
    if whole >= 0.0 && (ticks - whole).abs() < 1e-6 {
        (whole + 1.0) * dt
    } else {
        t + dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steering_map_examples() {
        let c = ChassisParams::default();
        assert_eq!(steering_map(0.0, &c), 0.0);
        assert_eq!(steering_map(1.0, &c), 0.44);
        assert_eq!(steering_map(-0.5, &c), -0.22);
        assert_eq!(steering_map(-3.0, &c), -0.44);
    }

    #[test]
    fn motor_force_examples() {
        let m = MotorParams::default();
        assert_eq!(motor_force(1.0, 0.0, &m), m.stall_torque_nm / m.wheel_radius_m);
        let v_nl = m.no_load_speed_radps * m.wheel_radius_m;
        assert_eq!(motor_force(1.0, v_nl, &m), 0.0);
        assert_eq!(motor_force(1.0, 2.0 * v_nl, &m), 0.0);
        let half = motor_force(0.5, 0.5 * v_nl, &m);
        assert!((half - 0.25 * m.stall_torque_nm / m.wheel_radius_m).abs() < 1e-12);
    }

    #[test]
    fn command_clamps() {
        let c = ActuationCommand::new(2.0, -1.0, -7.0);
        assert_eq!(c, ActuationCommand::new(1.0, 0.0, -1.0));
        let c = ActuationCommand::new(f64::NAN, 0.5, f64::INFINITY);
        assert_eq!(c, ActuationCommand::new(0.0, 0.5, 1.0));
        let parsed: ActuationCommand =
            serde_json::from_str(r#"{"throttle":3,"braking":0.2,"steering":-2}"#).unwrap();
        assert_eq!(parsed, ActuationCommand::new(1.0, 0.2, -1.0));
    }

    #[test]
    fn equilibrium_at_rest() {
        let (c, m) = (ChassisParams::default(), MotorParams::default());
        let s0 = VehicleState::at_pose(1.0, -2.0, 0.3);
        let s1 = step(&s0, &ActuationCommand::default(), 0.01, &c, &m).unwrap();
        assert_eq!(
            s1,
            VehicleState {
                sim_time_s: 0.01,
                ..s0
            }
        );
    }

    #[test]
    fn braking_never_reverses() {
        let (c, m) = (ChassisParams::default(), MotorParams::default());
        let mut s = VehicleState {
            speed_mps: 0.05,
            ..VehicleState::default()
        };
        for _ in 0..50 {
            s = step(&s, &ActuationCommand::new(0.0, 1.0, 0.0), 0.01, &c, &m).unwrap();
            assert!(s.speed_mps >= 0.0);
        }
        assert_eq!(s.speed_mps, 0.0);
    }

    #[test]
    fn time_is_step_count_times_dt() {
        let (c, m) = (ChassisParams::default(), MotorParams::default());
        let mut s = VehicleState::default();
        let cmd = ActuationCommand::new(0.3, 0.0, 0.2);
        for n in 1..=2000u32 {
            s = step(&s, &cmd, 0.01, &c, &m).unwrap();
            assert_eq!(s.sim_time_s, f64::from(n) * 0.01);
        }
    }

    #[test]
    fn bad_dt_and_nonfinite() {
        let (c, m) = (ChassisParams::default(), MotorParams::default());
        let s = VehicleState::default();
        assert!(step(&s, &ActuationCommand::default(), 0.0, &c, &m).is_err());
        assert!(step(&s, &ActuationCommand::default(), f64::NAN, &c, &m).is_err());
        let pathological = ChassisParams {
            mass_kg: 1e-320,
            ..c
        };
        let r = step(&s, &ActuationCommand::new(1.0, 0.0, 0.0), 0.01, &pathological, &m);
        assert!(matches!(r, Err(TwinError::NonFiniteState { .. })));
    }

    #[test]
    fn turn_radius() {
        let c = ChassisParams::default();
        let r = steady_turn_radius(0.44, &c).unwrap();
        assert!((r - 0.47 / 0.44f64.tan()).abs() < 1e-15);
        assert!((r - 0.998).abs() < 1e-3);
        assert_eq!(steady_turn_radius(-0.44, &c).unwrap(), r);
        assert_eq!(steady_turn_radius(0.0, &c), Err(TwinError::ZeroSteer));
        let small = 1e-4;
        let rs = steady_turn_radius(small, &c).unwrap();
        assert!((rs * small / c.wheelbase_m - 1.0).abs() < 1e-7);
    }

    #[test]
    fn param_validation() {
        assert!(ChassisParams::default().validate().is_ok());
        assert!(MotorParams::default().validate().is_ok());
        let c = ChassisParams {
            max_steer_rad: 1.6,
            ..ChassisParams::default()
        };
        assert!(c.validate().unwrap_err().contains("max_steer_rad"));
        let m = MotorParams {
            wheel_radius_m: 0.0,
            ..MotorParams::default()
        };
        assert!(m.validate().unwrap_err().contains("wheel_radius_m"));
    }
}
