//! Run logs: one canonical-JSON record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ConfigError;
use crate::autonomy::PlanDiagnostics;
use crate::twin::{ActuationCommand, VehicleState};
use crate::wire::canonical_json;

/// One dynamics step of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunLogRecord {
    pub step: u64,
    pub sim_time_s: f64,
    pub state: VehicleState,
    /// Command applied over this step.
    pub command: ActuationCommand,
    /// Detections in the most recent sensor frame.
    pub detections_count: usize,
    /// Validity and target of the plan that produced `command`.
    pub plan_valid: bool,
    pub target: Option<[f64; 2]>,
    /// Present on the step where a new plan took effect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanDiagnostics>,
}

impl RunLogRecord {
    pub fn to_line(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("log records are plain data"))
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ConfigError + '_ {
    move |source| ConfigError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Append-only log writer with a single owner.
pub struct LogWriter<W: Write> {
    out: W,
    last_step: Option<u64>,
}

impl LogWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self, ConfigError> {
        let file = File::create(path).map_err(io(path))?;
        Ok(Self::new(BufWriter::new(file)))
    }
}

impl<W: Write> LogWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            last_step: None,
        }
    }

    pub fn append(&mut self, record: &RunLogRecord) -> Result<(), ConfigError> {
        if self.last_step.is_some_and(|s| record.step <= s) {
            return Err(ConfigError::Validation {
                key: "step".into(),
                constraint: format!(
                    "steps must strictly increase ({} after {})",
                    record.step,
                    self.last_step.unwrap_or_default()
                ),
            });
        }
        self.last_step = Some(record.step);
        writeln!(self.out, "{}", record.to_line()).map_err(io(Path::new("<log>")))
    }

    pub fn finish(mut self) -> Result<W, ConfigError> {
        self.out.flush().map_err(io(Path::new("<log>")))?;
        Ok(self.out)
    }
}

pub fn write_log_to<W: Write>(out: W, records: &[RunLogRecord]) -> Result<W, ConfigError> {
    let mut writer = LogWriter::new(out);
    for r in records {
        writer.append(r)?;
    }
    writer.finish()
}

pub fn write_log(path: &Path, records: &[RunLogRecord]) -> Result<(), ConfigError> {
    let mut writer = LogWriter::create(path)?;
    for r in records {
        writer.append(r)?;
    }
    writer.finish().map(drop)
}

pub fn read_log_from<R: BufRead>(input: R) -> Result<Vec<RunLogRecord>, ConfigError> {
    let mut records: Vec<RunLogRecord> = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| ConfigError::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        let record: RunLogRecord =
            serde_json::from_str(&line).map_err(|e| ConfigError::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        if records.last().is_some_and(|prev| record.step <= prev.step) {
            return Err(ConfigError::MalformedLine {
                line: line_no,
                message: format!("step {} does not increase", record.step),
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn read_log(path: &Path) -> Result<Vec<RunLogRecord>, ConfigError> {
    let file = File::open(path).map_err(io(path))?;
    read_log_from(BufReader::new(file))
}
