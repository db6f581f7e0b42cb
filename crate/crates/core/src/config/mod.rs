//! Layered scenario configuration: packaged defaults deep-merged with user
//! files (later files win), validated into a [`Scenario`], plus the
//! line-delimited run log.

mod log;
pub mod yaml;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::autonomy::{ControlParams, Pipeline, PlannerParams};
use crate::bridge::{SyncMode, SyncPolicy};
use crate::sensors::{CameraModel, Cone, ConeColor, LidarParams};
use crate::twin::{ChassisParams, MotorParams, VehicleState};
use crate::wire::canonical_json;

pub use self::log::{read_log, read_log_from, write_log, write_log_to, LogWriter, RunLogRecord};

/// Deepest nesting accepted in a configuration document.
pub const MAX_DEPTH: usize = 32;

/// The packaged defaults, as shipped.
pub const DEFAULTS_YAML: &str = include_str!("../../assets/defaults.yaml");

/// A configuration tree: maps with string keys, sequences and scalars.
pub type ConfigDocument = Value;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("document nesting exceeds {MAX_DEPTH} levels")]
    DepthExceeded,
    #[error("invalid value for `{key}`: {constraint}")]
    Validation { key: String, constraint: String },
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
}

impl ConfigError {
    fn validation(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Self::Validation {
            key: key.into(),
            constraint: constraint.into(),
        }
    }
}

/// Container nesting depth; scalars are depth 0.
pub fn depth(doc: &Value) -> usize {
    match doc {
        Value::Array(items) => 1 + items.iter().map(depth).max().unwrap_or(0),
        Value::Object(map) => 1 + map.values().map(depth).max().unwrap_or(0),
        _ => 0,
    }
}

/// Merges `over` onto `base`. Maps merge key by key recursively; anything
/// else in `over` (scalars, sequences, type conflicts) replaces the base
/// value wholesale.
pub fn deep_merge(base: &Value, over: &Value) -> Result<Value, ConfigError> {
    if depth(base) > MAX_DEPTH || depth(over) > MAX_DEPTH {
        return Err(ConfigError::DepthExceeded);
    }
    Ok(merge_rec(base, over))
}

fn merge_rec(base: &Value, over: &Value) -> Value {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            let mut out = b.clone();
            for (k, v) in o {
                let merged = match out.get(k) {
                    Some(existing) => merge_rec(existing, v),
                    None => v.clone(),
                };
                out.insert(k.clone(), merged);
            }
            Value::Object(out)
        }
        _ => over.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub x_m: f64,
    pub y_m: f64,
    pub yaw_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerParams {
    pub target_speed_mps: f64,
    pub kp_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub dynamics_dt_s: f64,
    pub sensor_period_s: f64,
    pub max_duration_s: f64,
    pub fail_fast: bool,
    pub start: StartPose,
    pub chassis: ChassisParams,
    pub motor: MotorParams,
    pub camera: CameraModel,
    pub lidar: Option<LidarParams>,
    pub planner: PlannerParams,
    pub controller: ControllerParams,
    pub sync: SyncPolicy,
    /// Index of the cone pair whose gate completes the run; `None` means
    /// the last pair.
    pub finish_pair: Option<usize>,
    pub course: Vec<Cone>,
}

impl Default for Scenario {
    fn default() -> Self {
        packaged_defaults()
            .expect("packaged defaults are valid")
            .scenario
    }
}

/// A validated scenario together with any unknown-key warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub warnings: Vec<String>,
}

impl Scenario {
    /// Canonical JSON form; identical scenarios serialize byte-identically.
    pub fn to_canonical_json(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("scenario is plain data"))
    }

    /// Dynamics steps per sensor frame.
    pub fn decimation(&self) -> u64 {
        (self.sensor_period_s / self.dynamics_dt_s).round() as u64
    }

    pub fn max_steps(&self) -> u64 {
        (self.max_duration_s / self.dynamics_dt_s).round() as u64
    }

    pub fn start_state(&self) -> VehicleState {
        VehicleState::at_pose(self.start.x_m, self.start.y_m, self.start.yaw_rad)
    }

    pub fn control_params(&self) -> ControlParams {
        ControlParams {
            target_speed_mps: self.controller.target_speed_mps,
            kp_speed: self.controller.kp_speed,
            wheelbase_m: self.chassis.wheelbase_m,
            max_steer_rad: self.chassis.max_steer_rad,
        }
    }

    pub fn pipeline(&self) -> Pipeline {
        Pipeline {
            camera: self.camera,
            planner: self.planner,
            control: self.control_params(),
        }
    }

    /// Left/right cone pairs: the i-th red cone with the i-th green cone,
    /// in course order.
    pub fn cone_pairs(&self) -> Vec<(Cone, Cone)> {
        cone_pairs(&self.course)
    }

    /// The pair forming the finish gate, if the course has any pairs.
    pub fn finish_gate(&self) -> Option<(Cone, Cone)> {
        let pairs = self.cone_pairs();
        let idx = self.finish_pair.unwrap_or(pairs.len().checked_sub(1)?);
        pairs.get(idx).copied()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::validation(key, format!("must be positive, got {v}")))
            }
        };
        positive("dynamics_dt_s", self.dynamics_dt_s)?;
        positive("sensor_period_s", self.sensor_period_s)?;
        positive("max_duration_s", self.max_duration_s)?;
        let ratio = self.sensor_period_s / self.dynamics_dt_s;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(ConfigError::validation(
                "sensor_period_s",
                format!(
                    "must be an integer multiple of dynamics_dt_s ({} / {} = {ratio})",
                    self.sensor_period_s, self.dynamics_dt_s
                ),
            ));
        }
        if !(self.start.x_m.is_finite() && self.start.y_m.is_finite() && self.start.yaw_rad.is_finite()) {
            return Err(ConfigError::validation("start", "pose must be finite"));
        }
        self.chassis
            .validate()
            .map_err(|c| ConfigError::validation("chassis", c))?;
        self.motor
            .validate()
            .map_err(|c| ConfigError::validation("motor", c))?;
        self.camera
            .validate()
            .map_err(|c| ConfigError::validation("camera", c))?;
        if let Some(lidar) = &self.lidar {
            lidar
                .validate()
                .map_err(|c| ConfigError::validation("lidar", c))?;
        }
        self.planner
            .validate()
            .map_err(|c| ConfigError::validation("planner", c))?;
        if !(self.controller.target_speed_mps.is_finite() && self.controller.target_speed_mps >= 0.0) {
            return Err(ConfigError::validation(
                "controller.target_speed_mps",
                "must be finite and non-negative",
            ));
        }
        if !(self.controller.kp_speed.is_finite() && self.controller.kp_speed >= 0.0) {
            return Err(ConfigError::validation(
                "controller.kp_speed",
                "must be finite and non-negative",
            ));
        }
        if self.sync.mode == SyncMode::LockStep {
            positive("sync.step_dt_s", self.sync.step_dt_s)?;
            if (self.sync.step_dt_s - self.dynamics_dt_s).abs() > 1e-12 * self.dynamics_dt_s {
                return Err(ConfigError::validation(
                    "sync.step_dt_s",
                    "must equal dynamics_dt_s in lock_step mode",
                ));
            }
        }
        for (i, cone) in self.course.iter().enumerate() {
            cone.validate()
                .map_err(|c| ConfigError::validation(format!("course[{i}]"), c))?;
        }
        let pairs = self.cone_pairs().len();
        if let Some(idx) = self.finish_pair {
            if pairs > 0 && idx >= pairs {
                return Err(ConfigError::validation(
                    "finish_pair",
                    format!("index {idx} is out of range for a course with {pairs} cone pairs"),
                ));
            }
        }
        Ok(())
    }
}

pub fn cone_pairs(course: &[Cone]) -> Vec<(Cone, Cone)> {
    let left = course.iter().filter(|c| c.color == ConeColor::Red);
    let right = course.iter().filter(|c| c.color == ConeColor::Green);
    left.zip(right).map(|(l, r)| (*l, *r)).collect()
}

/// Parses config text; `file` is only used for error messages.
pub fn parse_document(text: &str, file: &str) -> Result<ConfigDocument, ConfigError> {
    let doc = yaml::parse(text).map_err(|e| ConfigError::Parse {
        file: file.to_owned(),
        line: e.line,
        message: e.message,
    })?;
    match doc {
        Value::Object(_) => Ok(doc),
        Value::Null => Ok(Value::Object(Map::new())),
        _ => Err(ConfigError::Parse {
            file: file.to_owned(),
            line: 1,
            message: "top level must be a mapping".into(),
        }),
    }
}

pub fn defaults_document() -> ConfigDocument {
    parse_document(DEFAULTS_YAML, "<defaults>").expect("packaged defaults parse")
}

pub fn packaged_defaults() -> Result<LoadedScenario, ConfigError> {
    scenario_from_document(&defaults_document())
}

/// Folds the files over the packaged defaults, left to right, and
/// materializes the result.
pub fn load_scenario<P: AsRef<Path>>(paths: &[P]) -> Result<LoadedScenario, ConfigError> {
    let mut doc = defaults_document();
    for path in paths {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let layer = parse_document(&text, &path.display().to_string())?;
        doc = deep_merge(&doc, &layer)?;
    }
    scenario_from_document(&doc)
}

/// Like [`load_scenario`] but with in-memory layers.
pub fn load_scenario_from_str(layers: &[&str]) -> Result<LoadedScenario, ConfigError> {
    let mut doc = defaults_document();
    for (i, text) in layers.iter().enumerate() {
        let layer = parse_document(text, &format!("<layer {i}>"))?;
        doc = deep_merge(&doc, &layer)?;
    }
    scenario_from_document(&doc)
}

pub fn scenario_from_document(doc: &ConfigDocument) -> Result<LoadedScenario, ConfigError> {
    let mut doc = doc.clone();
    let mut warnings = Vec::new();
    strip_unknown(&mut doc, &reference_tree(), "", &mut warnings);
    for w in &warnings {
        ::log::warn!("{w}");
    }
    let scenario: Scenario = serde_path_to_error::deserialize(&doc).map_err(|e| {
        let key = e.path().to_string();
        ConfigError::validation(key, e.into_inner().to_string())
    })?;
    scenario.validate()?;
    Ok(LoadedScenario { scenario, warnings })
}

/// Shape of every key a scenario understands, with optional sections
/// filled in.
fn reference_tree() -> Value {
    let reference = Scenario {
        seed: 0,
        dynamics_dt_s: 0.01,
        sensor_period_s: 0.1,
        max_duration_s: 1.0,
        fail_fast: false,
        start: StartPose::default(),
        chassis: ChassisParams::default(),
        motor: MotorParams::default(),
        camera: CameraModel::default(),
        lidar: Some(LidarParams::default()),
        planner: PlannerParams::default(),
        controller: ControllerParams {
            target_speed_mps: 0.0,
            kp_speed: 0.0,
        },
        sync: SyncPolicy::lock_step(0.01),
        finish_pair: Some(0),
        course: vec![Cone::new(0.0, 0.0, ConeColor::Red)],
    };
    serde_json::to_value(reference).expect("scenario is plain data")
}

fn strip_unknown(doc: &mut Value, reference: &Value, path: &str, warnings: &mut Vec<String>) {
    match (doc, reference) {
        (Value::Object(map), Value::Object(known)) => {
            let unknown: Vec<String> = map.keys().filter(|k| !known.contains_key(*k)).cloned().collect();
            for key in unknown {
                warnings.push(format!("unknown key `{}` ignored", join(path, &key)));
                map.remove(&key);
            }
            for (key, value) in map.iter_mut() {
                strip_unknown(value, &known[key], &join(path, key), warnings);
            }
        }
        (Value::Array(items), Value::Array(known)) => {
            if let Some(shape) = known.first() {
                for (i, item) in items.iter_mut().enumerate() {
                    strip_unknown(item, shape, &format!("{path}[{i}]"), warnings);
                }
            }
        }
        _ => {}
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_owned()
    } else {
        format!("{path}.{key}")
    }
}
