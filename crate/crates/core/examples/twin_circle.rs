//! Holds full steering lock at constant speed and compares the driven
//! circle with L / tan(delta), then shows the full-throttle speed ramp.
//!
//! ```bash
//! cargo run -p cosim --example twin_circle
//! ```

use cosim::twin::{
    motor_force, resistance_force, step, steady_turn_radius, ActuationCommand, ChassisParams, MotorParams,
    VehicleState,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chassis = ChassisParams::default();
    let motor = MotorParams::default();
    let v = 1.0;
    let trim = resistance_force(v, &chassis) / motor_force(1.0, v, &motor);
    let cmd = ActuationCommand::new(trim, 0.0, 1.0);
    let mut s = VehicleState {
        speed_mps: v,
        ..VehicleState::default()
    };
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..1200 {
        s = step(&s, &cmd, 0.01, &chassis, &motor)?;
        if i >= 100 {
            min_x = min_x.min(s.x_m);
            max_x = max_x.max(s.x_m);
        }
    }
    let expected = steady_turn_radius(chassis.max_steer_rad, &chassis)?;
    println!("trim throttle        {trim:.4}");
    println!("analytic radius      {expected:.4} m");
    println!("half x-extent        {:.4} m", 0.5 * (max_x - min_x));

    let mut s = VehicleState::default();
    let full = ActuationCommand::new(1.0, 0.0, 0.0);
    for second in 1..=10 {
        for _ in 0..100 {
            s = step(&s, &full, 0.01, &chassis, &motor)?;
        }
        println!("t={second:>2} s  speed {:.3} m/s", s.speed_mps);
    }
    Ok(())
}
