//! Casts a planar lidar sweep against the packaged course from the start
//! pose and prints the nearest returns.
//!
//! ```bash
//! cargo run -p cosim --example lidar_scan
//! ```

use cosim::config::packaged_defaults;
use cosim::sensors::{lidar_scan, LidarParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = packaged_defaults()?.scenario;
    let params = LidarParams {
        beams: 181,
        ..LidarParams::default()
    };
    let ranges = lidar_scan(&scenario.start_state(), &params, &scenario.course, 0);
    let mut hits: Vec<(f64, f64)> = ranges
        .iter()
        .enumerate()
        .filter(|(_, r)| **r < params.max_range_m)
        .map(|(i, r)| (params.beam_angle(i as u32).to_degrees(), *r))
        .collect();
    println!("{} of {} beams hit a cone", hits.len(), ranges.len());
    hits.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (deg, r) in hits.iter().take(8) {
        println!("  {deg:7.2} deg  {r:6.3} m");
    }
    Ok(())
}
