//! Projects cones through the pinhole camera, rounds the boxes as the
//! sensor emits them, and back-projects them to the ground plane.
//!
//! ```bash
//! cargo run -p cosim --example perception_roundtrip
//! ```

use cosim::autonomy::estimate_cone_position;
use cosim::sensors::{detect, emit_detections, project_cone, CameraModel, Cone, ConeColor};
use cosim::twin::VehicleState;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cam = CameraModel::default();
    let state = VehicleState::default();
    let cones = [
        Cone::new(3.0, 0.0, ConeColor::Red),
        Cone::new(2.0, 0.6, ConeColor::Red),
        Cone::new(4.5, -0.7, ConeColor::Green),
        Cone::new(-1.0, 0.0, ConeColor::Green),
    ];
    println!("{:>16}  {:>32}  {:>16}  {:>16}", "true (x, y)", "box", "exact estimate", "rounded estimate");
    for cone in &cones {
        let Some(det) = project_cone(&state, &cam, cone) else {
            println!("({:5.2}, {:5.2})  not visible", cone.x_m, cone.y_m);
            continue;
        };
        let exact = estimate_cone_position(&det, &cam)?;
        let rounded = emit_detections(&[det]);
        let r = estimate_cone_position(&rounded[0], &cam)?;
        println!(
            "({:5.2}, {:5.2})  [{:6.1} {:6.1} {:6.1} {:6.1}]  ({:6.3}, {:6.3})  ({:6.3}, {:6.3})",
            cone.x_m, cone.y_m, det.u_min, det.v_min, det.u_max, det.v_max, exact.x_m, exact.y_m, r.x_m, r.y_m
        );
    }

    let noisy = CameraModel {
        noise_px: 1.5,
        miss_rate: 0.2,
        ..cam
    };
    for seed in 0..3 {
        println!("seed {seed}: {} detections", detect(&state, &noisy, &cones, seed).len());
    }
    Ok(())
}
