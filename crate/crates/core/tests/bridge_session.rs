mod common;

use std::collections::HashMap;
use std::thread;
use std::time::Duration;

use cosim::bridge::{BridgeError, SyncPolicy};
use cosim::wire::MessageEnvelope;
use serde_json::json;

use common::checks::{lock_step_run, pair, sim_auto};

#[test]
fn ten_thousand_publishes_arrive_in_order() {
    let (a, b) = sim_auto();
    let (mut sim, mut auto) = pair(a, b);
    let n = 10_000u64;
    let writer = thread::spawn(move || {
        for i in 0..n {
            sim.publish("/state", json!({ "i": i }), i as f64 * 1e-3).unwrap();
        }
        sim.close()
    });
    let mut got = Vec::new();
    while (got.len() as u64) < n {
        got.extend(auto.poll(Duration::from_secs(5)).unwrap());
    }
    let stats = writer.join().unwrap();
    assert_eq!(stats.sent, n);
    for (i, env) in got.iter().enumerate() {
        assert_eq!(env.sequence, i as u64);
        assert_eq!(env.payload["i"], json!(i));
    }
    assert_eq!(auto.stats().received, n);
}

fn assert_gap_free(envs: &[MessageEnvelope]) {
    let mut next: HashMap<&str, u64> = HashMap::new();
    for env in envs {
        let e = next.entry(env.topic.as_str()).or_insert(0);
        assert_eq!(env.sequence, *e, "topic {}", env.topic);
        *e += 1;
    }
}

#[test]
fn ten_thousand_lock_step_exchanges_lose_nothing() {
    let steps = 10_000;
    let (sim_seen, auto_seen) = lock_step_run(steps);
    assert_gap_free(&sim_seen);
    assert_gap_free(&auto_seen);
    assert_eq!(sim_seen.len() as u64, steps - steps.div_ceil(3));
    let states = auto_seen.iter().filter(|e| e.topic == "/state").count() as u64;
    let frames = auto_seen.iter().filter(|e| e.topic == "/frame").count() as u64;
    assert_eq!((states, frames), (steps, steps / 10));
    for env in auto_seen.iter().filter(|e| e.topic == "/state") {
        assert_eq!(env.payload["k"], json!(env.sequence));
    }
}

#[test]
fn lock_step_transcripts_are_deterministic() {
    assert_eq!(lock_step_run(300), lock_step_run(300));
}

#[test]
fn peer_gone_mid_exchange_reports_closed() {
    let (a, b) = sim_auto();
    let (sim, auto) = pair(a, b);
    let mut sim = sim.with_sync(SyncPolicy::lock_step(0.01));
    drop(auto);
    let err = sim.step_exchange(&[], 0.0).unwrap_err();
    assert!(matches!(err, BridgeError::StepTimeout { peer_closed: true, .. }), "{err:?}");
    assert!(matches!(sim.poll(Duration::ZERO), Err(BridgeError::PeerClosed)));
}
