//! Fits lane boundaries to cone estimates, picks the lookahead target and
//! turns it into a pure-pursuit command.
//!
//! ```bash
//! cargo run -p cosim --example plan_and_control
//! ```

use cosim::autonomy::{control, plan, poly_eval, ConeEstimate, ControlParams, PlannerParams};
use cosim::sensors::ConeColor;
use cosim::twin::VehicleState;

fn main() {
    // A lane bending left: y = 0.05 x^2 on both sides, 1 m wide.
    let cones: Vec<ConeEstimate> = [1.0, 2.0, 3.0, 4.0]
        .iter()
        .flat_map(|&x| {
            let c = 0.05 * x * x;
            [
                ConeEstimate { x_m: x, y_m: c + 0.5, label: ConeColor::Red },
                ConeEstimate { x_m: x, y_m: c - 0.5, label: ConeColor::Green },
            ]
        })
        .collect();
    let params = PlannerParams::default();
    let p = plan(&cones, &params);
    println!("left  coeffs {:?}", p.left_coeffs);
    println!("right coeffs {:?}", p.right_coeffs);
    println!("target ({:.3}, {:.3})", p.target_x_m, p.target_y_m);
    if let Some(l) = &p.left_coeffs {
        println!("left boundary at x=2: {:.3}", poly_eval(l, 2.0));
    }
    let state = VehicleState {
        speed_mps: 1.0,
        ..VehicleState::default()
    };
    let cmd = control(&p, &state, &ControlParams::default());
    println!(
        "command throttle={:.3} braking={:.3} steering={:.4}",
        cmd.throttle, cmd.braking, cmd.steering
    );

    let lone: Vec<ConeEstimate> = cones.iter().filter(|c| c.label == ConeColor::Green).copied().collect();
    let p = plan(&lone, &params);
    println!("right side only: target ({:.3}, {:.3})", p.target_x_m, p.target_y_m);
    let p = plan(&[], &params);
    println!("no cones: valid={} -> {:?}", p.valid, control(&p, &state, &ControlParams::default()));
}
