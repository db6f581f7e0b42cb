//! Drives the packaged S-curve course in one process and prints the run
//! report.
//!
//! ```bash
//! cargo run --release -p cosim --example closed_loop
//! ```

use cosim::config::packaged_defaults;
use cosim::harness::run_local;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = packaged_defaults()?.scenario;
    let out = run_local(&scenario)?;
    let r = &out.report;
    println!("stop reason       {:?}", out.stop);
    println!("completed         {}", r.completed);
    println!("steps             {} ({:.2} s sim)", r.steps, out.final_state.sim_time_s);
    println!("cones struck      {}", r.cones_struck);
    println!("max cross-track   {:.3} m", r.max_cross_track_m.unwrap_or(f64::NAN));
    println!("mean cross-track  {:.3} m", r.mean_cross_track_m.unwrap_or(f64::NAN));
    println!("min clearance     {:.3} m", r.min_cone_clearance_m.unwrap_or(f64::NAN));
    println!("wall time         {:.3} s", r.wall_time_s);
    println!(
        "final pose        x={:.3} y={:.3} yaw={:.3}",
        out.final_state.x_m, out.final_state.y_m, out.final_state.yaw_rad
    );
    Ok(())
}
