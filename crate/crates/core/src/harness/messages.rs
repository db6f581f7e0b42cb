//! Topics and payloads exchanged between the sim and autonomy roles.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::autonomy::PlanDiagnostics;
use crate::bridge::Handshake;
use crate::sensors::{Detection, LaserScan};
use crate::twin::{ActuationCommand, VehicleState, VehicleStateMsg};
use crate::wire::{CodecRegistry, MessageEnvelope, WireError};

pub const TOPIC_DETECTIONS: &str = "/sim/detections";
pub const TOPIC_ODOMETRY: &str = "/sim/odometry";
pub const TOPIC_VEHICLE_STATE: &str = "/sim/vehicle_state";
pub const TOPIC_SCAN: &str = "/sim/scan";
pub const TOPIC_STATUS: &str = "/sim/status";
pub const TOPIC_VEHICLE_INPUT: &str = "/autonomy/vehicle_input";
pub const TOPIC_PLAN: &str = "/autonomy/plan";

pub const MSG_DETECTIONS: &str = "Detections2D";
pub const MSG_ODOMETRY: &str = "Odometry";
pub const MSG_VEHICLE_STATE: &str = "VehicleState";
pub const MSG_SCAN: &str = "LaserScan";
pub const MSG_STATUS: &str = "SimStatus";
pub const MSG_VEHICLE_INPUT: &str = "VehicleInput";
pub const MSG_PLAN: &str = "PlanDiagnostics";

/// Measured wheel speed, the only motion signal the autonomy role sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Odometry {
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    MaxDuration,
    ConeStrike,
}

/// Sent by the sim role on its final exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimStatus {
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimMsg {
    Detections(Vec<Detection>),
    Odometry(Odometry),
    State(VehicleStateMsg),
    Scan(LaserScan),
    Status(SimStatus),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AutonomyMsg {
    Input(ActuationCommand),
    Plan(PlanDiagnostics),
}

/// Registry with a codec for every harness message type.
pub fn registry() -> CodecRegistry {
    let mut reg = CodecRegistry::new();
    reg.register_serde::<Vec<Detection>>(MSG_DETECTIONS).expect("fresh registry");
    reg.register_serde::<Odometry>(MSG_ODOMETRY).expect("fresh registry");
    reg.register_serde::<VehicleStateMsg>(MSG_VEHICLE_STATE).expect("fresh registry");
    reg.register_serde::<LaserScan>(MSG_SCAN).expect("fresh registry");
    reg.register_serde::<SimStatus>(MSG_STATUS).expect("fresh registry");
    reg.register_serde::<ActuationCommand>(MSG_VEHICLE_INPUT).expect("fresh registry");
    reg.register_serde::<PlanDiagnostics>(MSG_PLAN).expect("fresh registry");
    reg
}

pub fn sim_handshake(node_name: &str) -> Handshake {
    Handshake::new(node_name)
        .publishes(TOPIC_DETECTIONS, MSG_DETECTIONS)
        .publishes(TOPIC_ODOMETRY, MSG_ODOMETRY)
        .publishes(TOPIC_VEHICLE_STATE, MSG_VEHICLE_STATE)
        .publishes(TOPIC_SCAN, MSG_SCAN)
        .publishes(TOPIC_STATUS, MSG_STATUS)
        .subscribes(TOPIC_VEHICLE_INPUT, MSG_VEHICLE_INPUT)
        .subscribes(TOPIC_PLAN, MSG_PLAN)
}

/// The autonomy role never subscribes to ground truth or lidar; those
/// envelopes are dropped on arrival and show up in the session statistics.
pub fn autonomy_handshake(node_name: &str) -> Handshake {
    Handshake::new(node_name)
        .publishes(TOPIC_VEHICLE_INPUT, MSG_VEHICLE_INPUT)
        .publishes(TOPIC_PLAN, MSG_PLAN)
        .subscribes(TOPIC_DETECTIONS, MSG_DETECTIONS)
        .subscribes(TOPIC_ODOMETRY, MSG_ODOMETRY)
        .subscribes(TOPIC_STATUS, MSG_STATUS)
}

impl SimMsg {
    pub fn encode(&self, reg: &CodecRegistry) -> Result<(String, Value), WireError> {
        let (topic, payload) = match self {
            SimMsg::Detections(d) => (TOPIC_DETECTIONS, reg.encode(MSG_DETECTIONS, d)?),
            SimMsg::Odometry(o) => (TOPIC_ODOMETRY, reg.encode(MSG_ODOMETRY, o)?),
            SimMsg::State(s) => (TOPIC_VEHICLE_STATE, reg.encode(MSG_VEHICLE_STATE, s)?),
            SimMsg::Scan(s) => (TOPIC_SCAN, reg.encode(MSG_SCAN, s)?),
            SimMsg::Status(s) => (TOPIC_STATUS, reg.encode(MSG_STATUS, s)?),
        };
        Ok((topic.to_owned(), payload))
    }

    pub fn decode(env: &MessageEnvelope, reg: &CodecRegistry) -> Result<Option<SimMsg>, WireError> {
        let p = &env.payload;
        Ok(Some(match env.msg_type.as_str() {
            MSG_DETECTIONS => SimMsg::Detections(reg.decode(MSG_DETECTIONS, p)?),
            MSG_ODOMETRY => SimMsg::Odometry(reg.decode(MSG_ODOMETRY, p)?),
            MSG_VEHICLE_STATE => SimMsg::State(reg.decode(MSG_VEHICLE_STATE, p)?),
            MSG_SCAN => SimMsg::Scan(reg.decode(MSG_SCAN, p)?),
            MSG_STATUS => SimMsg::Status(reg.decode(MSG_STATUS, p)?),
            _ => return Ok(None),
        }))
    }
}

impl AutonomyMsg {
    pub fn encode(&self, reg: &CodecRegistry) -> Result<(String, Value), WireError> {
        let (topic, payload) = match self {
            AutonomyMsg::Input(c) => (TOPIC_VEHICLE_INPUT, reg.encode(MSG_VEHICLE_INPUT, c)?),
            AutonomyMsg::Plan(p) => (TOPIC_PLAN, reg.encode(MSG_PLAN, p)?),
        };
        Ok((topic.to_owned(), payload))
    }

    pub fn decode(env: &MessageEnvelope, reg: &CodecRegistry) -> Result<Option<AutonomyMsg>, WireError> {
        let p = &env.payload;
        Ok(Some(match env.msg_type.as_str() {
            MSG_VEHICLE_INPUT => AutonomyMsg::Input(reg.decode(MSG_VEHICLE_INPUT, p)?),
            MSG_PLAN => AutonomyMsg::Plan(reg.decode(MSG_PLAN, p)?),
            _ => return Ok(None),
        }))
    }
}

/// Ground-truth message for one state.
pub fn state_msg(state: &VehicleState) -> SimMsg {
    SimMsg::State(VehicleStateMsg::from(state))
}
