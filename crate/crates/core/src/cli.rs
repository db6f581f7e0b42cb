//! Command-line front end. Exit codes: 0 for a completed run with no
//! strikes, 2 for an incomplete or struck run, 1 for errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bridge::{EndpointConfig, Role};
use crate::config::{self, read_log, write_log, Scenario};
use crate::harness::{self, Course, DistributedOutcome, DistributedRole, HarnessError, RunReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INCOMPLETE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cosim", version, about = "Co-simulation testbed for a cone-lane autonomy stack")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario in one process, or one role of a two-process run.
    Run(RunArgs),
    /// Recompute the run report from a log.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        #[arg(long = "scenario", num_args = 1..)]
        scenarios: Vec<PathBuf>,
    },
    /// Write the trajectory figure and one figure per planning frame.
    Plot {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Scenario files for the course; the packaged course if omitted.
        #[arg(long = "scenario", num_args = 1..)]
        scenarios: Vec<PathBuf>,
    },
    /// Inspect configuration.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Print the packaged defaults.
    DumpDefaults,
    /// Print the merged scenario as canonical JSON.
    Show {
        #[arg(long = "scenario", num_args = 1..)]
        scenarios: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Sim,
    Autonomy,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario files merged over the packaged defaults, later files win.
    #[arg(long = "scenario", num_args = 1..)]
    pub scenarios: Vec<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub fail_fast: bool,
    /// Run one role of a distributed run.
    #[arg(long, requires = "endpoint")]
    pub role: Option<RoleArg>,
    /// Wait for the peer on HOST:PORT.
    #[arg(long, value_name = "HOST:PORT", group = "endpoint")]
    pub listen: Option<String>,
    /// Connect to the peer at HOST:PORT.
    #[arg(long, value_name = "HOST:PORT", group = "endpoint")]
    pub connect: Option<String>,
    #[arg(long, default_value_t = 30.0)]
    pub handshake_timeout_s: f64,
    #[arg(long, default_value_t = 5.0)]
    pub step_timeout_s: f64,
}

/// Parses the process arguments and runs; returns the exit code.
pub fn main_from_env() -> i32 {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout();
    match execute(cli, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

/// Runs a parsed command, writing results to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run(args) => run(args, out),
        Command::Metrics { log, scenarios } => {
            let scenario = load(&scenarios)?;
            let records = read_log(&log)?;
            let report = harness::metrics(&records, &Course::from_scenario(&scenario), &scenario.chassis)?;
            print_report(out, &report)?;
            Ok(exit_code(&report))
        }
        Command::Plot { log, out: dir, scenarios } => {
            let scenario = load(&scenarios)?;
            let records = read_log(&log)?;
            let files = harness::plot(
                &records,
                &scenario.course,
                scenario.finish_pair,
                scenario.planner.lookahead_m,
                &dir,
            )?;
            writeln!(out, "wrote {} files to {}", files.len(), dir.display())?;
            Ok(EXIT_OK)
        }
        Command::Config { action } => match action {
            ConfigAction::DumpDefaults => {
                out.write_all(config::DEFAULTS_YAML.as_bytes())?;
                Ok(EXIT_OK)
            }
            ConfigAction::Show { scenarios } => {
                writeln!(out, "{}", load(&scenarios)?.to_canonical_json())?;
                Ok(EXIT_OK)
            }
        },
    }
}

fn load(paths: &[PathBuf]) -> Result<Scenario, config::ConfigError> {
    let loaded = config::load_scenario(paths)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok(loaded.scenario)
}

fn exit_code(report: &RunReport) -> i32 {
    if report.completed && report.cones_struck == 0 {
        EXIT_OK
    } else {
        EXIT_INCOMPLETE
    }
}

fn print_report(out: &mut dyn Write, report: &RunReport) -> std::io::Result<()> {
    writeln!(out, "{}", serde_json::to_string(report).expect("report is plain data"))
}

fn write_run_log(path: Option<&Path>, records: &[config::RunLogRecord]) -> Result<(), config::ConfigError> {
    match path {
        Some(p) => write_log(p, records),
        None => Ok(()),
    }
}

fn split_host_port(addr: &str) -> Result<(String, u16), String> {
    let (host, port) = addr
        .rsplit_once(':')
        .ok_or_else(|| format!("`{addr}` is not HOST:PORT"))?;
    let port = port.parse::<u16>().map_err(|e| format!("bad port in `{addr}`: {e}"))?;
    Ok((host.trim_start_matches('[').trim_end_matches(']').to_owned(), port))
}

fn run(args: RunArgs, out: &mut dyn Write) -> Result<i32, Box<dyn std::error::Error>> {
    let mut scenario = load(&args.scenarios)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    scenario.fail_fast |= args.fail_fast;

    let Some(role) = args.role else {
        let result = harness::run_local(&scenario)?;
        write_run_log(args.log.as_deref(), &result.log)?;
        print_report(out, &result.report)?;
        return Ok(exit_code(&result.report));
    };

    let (listener, addr) = match (&args.listen, &args.connect) {
        (Some(a), None) => (true, a),
        (None, Some(a)) => (false, a),
        _ => return Err("--role needs exactly one of --listen or --connect".into()),
    };
    let (host, port) = split_host_port(addr)?;
    let node_name = match role {
        RoleArg::Sim => "sim",
        RoleArg::Autonomy => "autonomy",
    };
    let mut endpoint = EndpointConfig::new(
        if listener { Role::Listener } else { Role::Connector },
        host,
        port,
        node_name,
    );
    endpoint.handshake_timeout = Duration::try_from_secs_f64(args.handshake_timeout_s)?;
    endpoint.step_timeout = Duration::try_from_secs_f64(args.step_timeout_s)?;
    let role = match role {
        RoleArg::Sim => DistributedRole::Sim,
        RoleArg::Autonomy => DistributedRole::Autonomy,
    };

    match harness::run_distributed(role, &scenario, &endpoint) {
        Ok(DistributedOutcome::Sim(result)) => {
            write_run_log(args.log.as_deref(), &result.log)?;
            print_report(out, &result.report)?;
            Ok(exit_code(&result.report))
        }
        Ok(DistributedOutcome::Autonomy(transcript)) => {
            writeln!(
                out,
                "{}",
                serde_json::json!({
                    "exchanges": transcript.exchanges,
                    "commands_sent": transcript.commands.len(),
                    "stop": transcript.stop,
                })
            )?;
            Ok(EXIT_OK)
        }
        Err(HarnessError::Aborted { source, partial }) => {
            write_run_log(args.log.as_deref(), &partial.log)?;
            print_report(out, &partial.report)?;
            Err(Box::new(HarnessError::Aborted { source, partial }))
        }
        Err(e) => Err(e.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    fn exec(args: &[&str]) -> (i32, String) {
        let cli = Cli::try_parse_from(std::iter::once("cosim").chain(args.iter().copied())).unwrap();
        let mut buf = Vec::new();
        let code = execute(cli, &mut buf).unwrap();
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn dump_defaults() {
        let (code, text) = exec(&["config", "dump-defaults"]);
        assert_eq!(code, 0);
        assert_eq!(text, config::DEFAULTS_YAML);
    }

    #[test]
    fn host_port() {
        assert_eq!(split_host_port("127.0.0.1:7000").unwrap(), ("127.0.0.1".into(), 7000));
        assert_eq!(split_host_port("[::1]:9").unwrap(), ("::1".into(), 9));
        assert!(split_host_port("nohost").is_err());
        assert!(split_host_port("h:99999").is_err());
    }

    #[test]
    fn role_requires_endpoint() {
        assert!(Cli::try_parse_from(["cosim", "run", "--role", "sim"]).is_err());
        assert!(Cli::try_parse_from(["cosim", "run", "--role", "sim", "--listen", "a:1", "--connect", "b:2"]).is_err());
    }

    #[test]
    fn short_run_writes_log_and_metrics_agree() {
        let dir = tempfile::tempdir().unwrap();
        let scen = dir.path().join("short.yaml");
        std::fs::write(&scen, "max_duration_s: 1.0\n").unwrap();
        let log = dir.path().join("run.jsonl");
        let (code, report) = exec(&[
            "run",
            "--scenario",
            scen.to_str().unwrap(),
            "--log",
            log.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_INCOMPLETE);
        let (code2, report2) = exec(&["metrics", "--log", log.to_str().unwrap(), "--scenario", scen.to_str().unwrap()]);
        assert_eq!(code2, EXIT_INCOMPLETE);
        let a: serde_json::Value = serde_json::from_str(&report).unwrap();
        let b: serde_json::Value = serde_json::from_str(&report2).unwrap();
        assert_eq!(a["max_cross_track_m"], b["max_cross_track_m"]);
        assert_eq!(a["steps"], 100);
    }
}
