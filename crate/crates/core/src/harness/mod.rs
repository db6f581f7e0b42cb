//! Closed-loop driver for the sim and autonomy roles.
//!
//! Both roles are small state machines advanced once per dynamics step.
//! [`run_local`] hands messages between them directly; the distributed
//! runners carry the same messages over a lock-step bridge session. Each
//! step the sim role publishes its sensor frame (on sensor steps), the
//! autonomy role publishes the command computed from the frame it received
//! one exchange earlier, and then the twin integrates one step under the
//! latched command.

pub mod messages;
pub mod metrics;
pub mod plot;

use std::path::PathBuf;
use std::thread;
use std::time::{Duration, Instant};

use crate::autonomy::{Pipeline, PlanDiagnostics};
use crate::bridge::{self, BridgeError, EndpointConfig, Session, SessionStats, Transport};
use crate::config::{ConfigError, RunLogRecord, Scenario};
use crate::sensors::{detect, emit_detections, lidar_scan, Detection, LaserScan};
use crate::twin::{self, ActuationCommand, TwinError, VehicleState};
use crate::wire::{CodecRegistry, MessageEnvelope, WireError};

pub use messages::{AutonomyMsg, Odometry, SimMsg, SimStatus, StopReason};
pub use metrics::{footprint_clearance, metrics, Course, RunReport};
pub use plot::plot;

/// Handshake timeout used by the in-process loopback runner.
pub const LOOPBACK_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);
/// Step timeout used by the in-process loopback runner.
pub const LOOPBACK_STEP_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(#[source] ConfigError),
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("run aborted after {} steps: {source}", partial.report.steps)]
    Aborted {
        source: BridgeError,
        partial: Box<RunOutput>,
    },
    #[error("log is empty")]
    EmptyLog,
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error(transparent)]
    Log(ConfigError),
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Everything a sim-side run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub log: Vec<RunLogRecord>,
    pub final_state: VehicleState,
    /// `None` when the run was cut short by a bridge failure.
    pub stop: Option<StopReason>,
    pub bridge_stats: Option<SessionStats>,
}

impl RunOutput {
    /// The command applied at each logged step, in order.
    pub fn commands(&self) -> Vec<ActuationCommand> {
        self.log.iter().map(|r| r.command).collect()
    }
}

/// What the autonomy role saw and sent.
#[derive(Debug, Clone, PartialEq)]
pub struct AutonomyTranscript {
    /// Exchange index and command for every command sent.
    pub commands: Vec<(u64, ActuationCommand)>,
    pub stop: Option<StopReason>,
    pub exchanges: u64,
    pub bridge_stats: Option<SessionStats>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-frame sensor seed derived from the scenario seed.
pub fn frame_seed(scenario_seed: u64, frame: u64) -> u64 {
    splitmix64(scenario_seed ^ splitmix64(frame))
}

const LIDAR_STREAM: u64 = 0x6C69_6461_7200_0000;

/// The sim role: twin, sensors and logging.
#[derive(Debug, Clone)]
pub struct SimSide {
    scenario: Scenario,
    course: Course,
    decimation: u64,
    max_steps: u64,
    state: VehicleState,
    command: ActuationCommand,
    plan_valid: bool,
    target: Option<[f64; 2]>,
    new_plan: Option<PlanDiagnostics>,
    detections_count: usize,
    step: u64,
    stop: Option<StopReason>,
    log: Vec<RunLogRecord>,
}

impl SimSide {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            course: Course::from_scenario(scenario),
            decimation: scenario.decimation().max(1),
            max_steps: scenario.max_steps(),
            state: scenario.start_state(),
            command: ActuationCommand::default(),
            plan_valid: false,
            target: None,
            new_plan: None,
            detections_count: 0,
            step: 0,
            stop: None,
            log: Vec::new(),
            scenario: scenario.clone(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn stop(&self) -> Option<StopReason> {
        self.stop
    }

    /// Messages for the current exchange.
    pub fn outgoing(&mut self) -> Vec<SimMsg> {
        if let Some(stop) = self.stop {
            return vec![SimMsg::Status(SimStatus { stop })];
        }
        if self.step % self.decimation != 0 {
            return Vec::new();
        }
        let s = &self.scenario;
        let seed = frame_seed(s.seed, self.step / self.decimation);
        let dets: Vec<Detection> = emit_detections(&detect(&self.state, &s.camera, &s.course, seed));
        self.detections_count = dets.len();
        let mut out = vec![
            SimMsg::Detections(dets),
            SimMsg::Odometry(Odometry {
                speed: self.state.speed_mps,
            }),
            messages::state_msg(&self.state),
        ];
        if let Some(lidar) = &s.lidar {
            out.push(SimMsg::Scan(LaserScan {
                fov: lidar.fov_rad,
                ranges: lidar_scan(&self.state, lidar, &s.course, seed ^ LIDAR_STREAM),
            }));
        }
        out
    }

    pub fn receive(&mut self, msgs: Vec<AutonomyMsg>) {
        for m in msgs {
            match m {
                AutonomyMsg::Input(cmd) => self.command = cmd,
                AutonomyMsg::Plan(diag) => {
                    self.plan_valid = diag.plan.valid;
                    self.target = diag.plan.target().map(|(x, y)| [x, y]);
                    self.new_plan = Some(diag);
                }
            }
        }
    }

    /// Logs the current step and integrates the twin over it.
    pub fn advance(&mut self) -> Result<(), TwinError> {
        debug_assert!(self.stop.is_none());
        let rec = self.record();
        self.log.push(rec);
        let s = &self.scenario;
        let next = twin::step(&self.state, &self.command, s.dynamics_dt_s, &s.chassis, &s.motor)?;
        let crossed = self.course.crosses_gate(&self.state, &next);
        self.state = next;
        self.step += 1;
        self.stop = if crossed {
            Some(StopReason::Completed)
        } else if s.fail_fast && metrics::strikes(&self.state, &s.chassis, &s.course).next().is_some() {
            Some(StopReason::ConeStrike)
        } else if self.step >= self.max_steps {
            Some(StopReason::MaxDuration)
        } else {
            None
        };
        Ok(())
    }

    fn record(&mut self) -> RunLogRecord {
        RunLogRecord {
            step: self.step,
            sim_time_s: self.state.sim_time_s,
            state: self.state,
            command: self.command,
            detections_count: self.detections_count,
            plan_valid: self.plan_valid,
            target: self.target,
            plan: self.new_plan.take(),
        }
    }

    /// Logs the terminal state and computes the report.
    pub fn finish(mut self, wall_time_s: f64, bridge_stats: Option<SessionStats>) -> RunOutput {
        let last = self.record();
        self.log.push(last);
        let mut report = metrics(&self.log, &self.course, &self.scenario.chassis).expect("log has the terminal record");
        report.completed &= self.stop.is_some();
        report.wall_time_s = wall_time_s;
        RunOutput {
            report,
            log: self.log,
            final_state: self.state,
            stop: self.stop,
            bridge_stats,
        }
    }
}

/// The autonomy role: perception, planning and control.
#[derive(Debug, Clone)]
pub struct AutonomySide {
    pipeline: Pipeline,
    frame: Option<Vec<Detection>>,
    speed_mps: f64,
    stop: Option<StopReason>,
}

impl AutonomySide {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            pipeline: scenario.pipeline(),
            frame: None,
            speed_mps: 0.0,
            stop: None,
        }
    }

    pub fn stop(&self) -> Option<StopReason> {
        self.stop
    }

    /// Command and plan for the frame received in the previous exchange.
    pub fn outgoing(&mut self) -> Vec<AutonomyMsg> {
        match self.frame.take() {
            Some(dets) => {
                let (cmd, diag) = self.pipeline.process(&dets, self.speed_mps);
                vec![AutonomyMsg::Input(cmd), AutonomyMsg::Plan(diag)]
            }
            None => Vec::new(),
        }
    }

    pub fn receive(&mut self, msgs: Vec<SimMsg>) {
        for m in msgs {
            match m {
                SimMsg::Detections(d) => self.frame = Some(d),
                SimMsg::Odometry(o) => self.speed_mps = o.speed,
                SimMsg::Status(s) => self.stop = Some(s.stop),
                SimMsg::State(_) | SimMsg::Scan(_) => {}
            }
        }
    }
}

fn validated(scenario: &Scenario) -> Result<(), HarnessError> {
    scenario.validate().map_err(HarnessError::ScenarioInvalid)
}

/// Runs both roles in this thread with direct calls.
pub fn run_local(scenario: &Scenario) -> Result<RunOutput, HarnessError> {
    validated(scenario)?;
    let started = Instant::now();
    let mut sim = SimSide::new(scenario);
    let mut auto = AutonomySide::new(scenario);
    loop {
        let sim_out = sim.outgoing();
        let auto_out = auto.outgoing();
        sim.receive(auto_out);
        auto.receive(sim_out);
        if sim.stop().is_some() {
            break;
        }
        sim.advance()?;
    }
    Ok(sim.finish(started.elapsed().as_secs_f64(), None))
}

fn decode_all<T>(
    envs: &[MessageEnvelope],
    reg: &CodecRegistry,
    decode: impl Fn(&MessageEnvelope, &CodecRegistry) -> Result<Option<T>, WireError>,
) -> Result<Vec<T>, WireError> {
    let mut out = Vec::with_capacity(envs.len());
    for env in envs {
        if let Some(m) = decode(env, reg)? {
            out.push(m);
        }
    }
    Ok(out)
}

fn exchange_time(session: &Session, scenario: &Scenario) -> f64 {
    session.next_step() as f64 * scenario.sync.step_dt_s
}

/// Sim role over an established session.
pub fn run_sim_session(scenario: &Scenario, session: Session) -> Result<RunOutput, HarnessError> {
    validated(scenario)?;
    let started = Instant::now();
    let reg = messages::registry();
    let mut session = session.with_sync(scenario.sync);
    let mut sim = SimSide::new(scenario);
    loop {
        let outgoing = sim
            .outgoing()
            .iter()
            .map(|m| m.encode(&reg))
            .collect::<Result<Vec<_>, _>>()?;
        let t = exchange_time(&session, scenario);
        let incoming = match session.step_exchange(&outgoing, t) {
            Ok(envs) => envs,
            Err(source) => {
                let stats = session.stats();
                let partial = sim.finish(started.elapsed().as_secs_f64(), Some(stats));
                return Err(HarnessError::Aborted {
                    source,
                    partial: Box::new(partial),
                });
            }
        };
        sim.receive(decode_all(&incoming, &reg, AutonomyMsg::decode)?);
        if sim.stop().is_some() {
            break;
        }
        sim.advance()?;
    }
    let stats = session.close();
    Ok(sim.finish(started.elapsed().as_secs_f64(), Some(stats)))
}

/// Autonomy role over an established session. Returns once the sim role
/// announces the end of the run.
pub fn run_autonomy_session(scenario: &Scenario, session: Session) -> Result<AutonomyTranscript, HarnessError> {
    validated(scenario)?;
    let reg = messages::registry();
    let mut session = session.with_sync(scenario.sync);
    let mut auto = AutonomySide::new(scenario);
    let mut commands = Vec::new();
    loop {
        let k = session.next_step();
        let out = auto.outgoing();
        for m in &out {
            if let AutonomyMsg::Input(cmd) = m {
                commands.push((k, *cmd));
            }
        }
        let outgoing = out.iter().map(|m| m.encode(&reg)).collect::<Result<Vec<_>, _>>()?;
        let t = exchange_time(&session, scenario);
        let incoming = session.step_exchange(&outgoing, t)?;
        auto.receive(decode_all(&incoming, &reg, SimMsg::decode)?);
        if auto.stop().is_some() {
            break;
        }
    }
    let exchanges = session.next_step();
    let stats = session.close();
    Ok(AutonomyTranscript {
        commands,
        stop: auto.stop(),
        exchanges,
        bridge_stats: Some(stats),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributedRole {
    Sim,
    Autonomy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistributedOutcome {
    Sim(RunOutput),
    Autonomy(AutonomyTranscript),
}

/// One role of a two-process run over TCP.
pub fn run_distributed(
    role: DistributedRole,
    scenario: &Scenario,
    endpoint: &EndpointConfig,
) -> Result<DistributedOutcome, HarnessError> {
    validated(scenario)?;
    match role {
        DistributedRole::Sim => {
            let session = bridge::establish(endpoint, messages::sim_handshake(&endpoint.node_name))?;
            run_sim_session(scenario, session).map(DistributedOutcome::Sim)
        }
        DistributedRole::Autonomy => {
            let session = bridge::establish(endpoint, messages::autonomy_handshake(&endpoint.node_name))?;
            run_autonomy_session(scenario, session).map(DistributedOutcome::Autonomy)
        }
    }
}

/// Runs both roles over a pair of connected transports, the autonomy role
/// on a separate thread. The two scenarios are normally identical.
pub fn run_pair<T: Transport>(
    sim_scenario: &Scenario,
    autonomy_scenario: &Scenario,
    sim_end: T,
    autonomy_end: T,
) -> Result<(RunOutput, AutonomyTranscript), HarnessError> {
    let auto_scenario = autonomy_scenario.clone();
    let handle = thread::spawn(move || {
        let session = Session::establish_over(
            autonomy_end,
            messages::autonomy_handshake("autonomy"),
            LOOPBACK_HANDSHAKE_TIMEOUT,
            LOOPBACK_STEP_TIMEOUT,
        )?;
        run_autonomy_session(&auto_scenario, session)
    });
    let sim_result = Session::establish_over(
        sim_end,
        messages::sim_handshake("sim"),
        LOOPBACK_HANDSHAKE_TIMEOUT,
        LOOPBACK_STEP_TIMEOUT,
    )
    .map_err(HarnessError::from)
    .and_then(|session| run_sim_session(sim_scenario, session));
    let auto_result = handle
        .join()
        .map_err(|_| HarnessError::Protocol("autonomy thread panicked".into()))?;
    let sim_out = sim_result?;
    Ok((sim_out, auto_result?))
}

/// Both roles over the in-memory transport.
pub fn run_loopback(scenario: &Scenario) -> Result<(RunOutput, AutonomyTranscript), HarnessError> {
    let (a, b) = bridge::memory_pair();
    run_pair(scenario, scenario, a, b)
}
