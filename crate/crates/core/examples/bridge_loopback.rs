//! Two bridge sessions over the in-memory transport: a free-running
//! publish/poll exchange, then lock-step exchanges with step markers.
//!
//! ```bash
//! cargo run -p cosim --example bridge_loopback
//! ```

use std::thread;
use std::time::Duration;

use cosim::bridge::{memory_pair, Handshake, Session, SyncPolicy};
use serde_json::json;

const WAIT: Duration = Duration::from_secs(5);

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (a, b) = memory_pair();
    let peer = thread::spawn(move || -> Result<_, cosim::bridge::BridgeError> {
        let hs = Handshake::new("autonomy")
            .publishes("/cmd", "Cmd")
            .subscribes("/state", "State");
        let mut s = Session::establish_over(b, hs, WAIT, WAIT)?;
        let got = s.poll(WAIT)?;
        println!("[autonomy] free-running poll got {} envelopes", got.len());
        let mut s = s.with_sync(SyncPolicy::lock_step(0.01));
        for k in 0..3u32 {
            let out = vec![("/cmd".to_string(), json!({"k": k}))];
            let incoming = s.step_exchange(&out, f64::from(k) * 0.01)?;
            println!("[autonomy] step {k}: {:?}", incoming.iter().map(|e| &e.payload).collect::<Vec<_>>());
        }
        Ok(s.close())
    });

    let hs = Handshake::new("sim").publishes("/state", "State").subscribes("/cmd", "Cmd");
    let mut s = Session::establish_over(a, hs, WAIT, WAIT)?;
    println!("[sim] peer `{}` publishes {:?}", s.peer().node_name, s.peer().publications);
    s.publish("/state", json!({"x": 0.0}), 0.0)?;
    s.publish("/state", json!({"x": 0.1}), 0.0)?;
    let mut s = s.with_sync(SyncPolicy::lock_step(0.01));
    for k in 0..3u32 {
        let incoming = s.step_exchange(&[], f64::from(k) * 0.01)?;
        println!("[sim] step {k}: {} envelopes", incoming.len());
    }
    let sim_stats = s.close();
    let auto_stats = peer.join().expect("peer thread")?;
    println!("{}", sim_stats.summary_line("sim"));
    println!("{}", auto_stats.summary_line("autonomy"));
    Ok(())
}
