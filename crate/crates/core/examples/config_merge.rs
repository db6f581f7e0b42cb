//! Deep-merges configuration layers and loads a scenario from the packaged
//! defaults plus an override.
//!
//! ```bash
//! cargo run -p cosim --example config_merge
//! ```

use cosim::config::{deep_merge, load_scenario_from_str, parse_document};
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = json!({"a": 1, "b": {"c": 2, "d": 3}, "list": [1, 2, 3]});
    let over = json!({"b": {"c": 9}, "e": 4, "list": [9]});
    println!("merged   {}", deep_merge(&base, &over)?);

    let layer = parse_document(
        "# faster, noisier\ncontroller:\n  target_speed_mps: 2.0\ncamera: {noise_px: 1.0}\nsteering_wheel: round\n",
        "<inline>",
    )?;
    println!("layer    {layer}");

    let loaded = load_scenario_from_str(&["controller:\n  target_speed_mps: 2.0\ncamera: {noise_px: 1.0}\nsteering_wheel: round\n"])?;
    for w in &loaded.warnings {
        println!("warning  {w}");
    }
    let s = loaded.scenario;
    println!(
        "scenario speed={} noise={} fx={} cones={}",
        s.controller.target_speed_mps,
        s.camera.noise_px,
        s.camera.fx,
        s.course.len()
    );

    match load_scenario_from_str(&["sensor_period_s: 0.015\n"]) {
        Ok(_) => println!("unexpectedly valid"),
        Err(e) => println!("rejected {e}"),
    }
    Ok(())
}
