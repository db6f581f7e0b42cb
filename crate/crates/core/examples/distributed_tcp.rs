//! Runs the sim and autonomy roles as two endpoints over TCP on localhost
//! and checks the log against a single-process run.
//!
//! ```bash
//! cargo run --release -p cosim --example distributed_tcp
//! ```
//!
//! The same split across two machines uses the CLI:
//!
//! ```bash
//! cosim run --role sim --listen 0.0.0.0:7400 --log run.jsonl
//! cosim run --role autonomy --connect SIM_HOST:7400
//! ```

use std::net::TcpListener;
use std::thread;

use cosim::bridge::{EndpointConfig, Role};
use cosim::config::packaged_defaults;
use cosim::harness::{run_distributed, run_local, DistributedOutcome, DistributedRole};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = packaged_defaults()?.scenario;
    let port = TcpListener::bind("127.0.0.1:0")?.local_addr()?.port();

    let auto_scenario = scenario.clone();
    let autonomy = thread::spawn(move || {
        let cfg = EndpointConfig::new(Role::Connector, "127.0.0.1", port, "autonomy");
        run_distributed(DistributedRole::Autonomy, &auto_scenario, &cfg)
    });
    let cfg = EndpointConfig::new(Role::Listener, "127.0.0.1", port, "sim");
    let DistributedOutcome::Sim(sim) = run_distributed(DistributedRole::Sim, &scenario, &cfg)? else {
        unreachable!("sim role returns a run output");
    };
    if let DistributedOutcome::Autonomy(t) = autonomy.join().expect("autonomy thread")? {
        println!("autonomy sent {} commands over {} exchanges", t.commands.len(), t.exchanges);
    }
    let stats = sim.bridge_stats.expect("distributed runs carry stats");
    println!("sim {}", stats.summary_line("sim"));
    println!("distributed completed={} strikes={}", sim.report.completed, sim.report.cones_struck);

    let local = run_local(&scenario)?;
    println!("identical to local run: {}", local.log == sim.log);
    Ok(())
}
