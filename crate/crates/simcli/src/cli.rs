// SPDX-License-Identifier: Apache-2.0

//! `simcli` argument parsing and dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use acp_core::par::ExecMode;
use acp_core::store::MetadataStore;
use acp_core::{seed, Config};
use acp_model::{RuleFile, Timestamp};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::detect;
use crate::error::{Result, SimError};
use crate::fleet::{self, gen_fleet, read_fleet, write_fleet};
use crate::latency::{measure_latency, Endpoint, LatencyParams};
use crate::replay::replay;
use crate::trace::{gen_trace, load_trace, save_trace, write_trace, TraceParams, DEFAULT_START_SECS};

/// Above this rate loss is reported but not treated as a regression.
pub const LOSSLESS_RATE: f64 = 100.0;

#[derive(Debug, Parser)]
#[command(name = "simcli", version, about = "Fleet simulator and measurement harness")]
pub struct Cli {
    /// Server configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate fleets and traces.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Drive a running server.
    #[command(subcommand)]
    Run(RunCommand),
    /// Reference derived-event detection.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Measurements against a server.
    #[command(subcommand)]
    Measure(MeasureCommand),
    /// Store administration.
    #[command(subcommand)]
    Seed(SeedCommand),
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Sensor metadata placed in the seed building.
    Fleet {
        #[arg(long)]
        sensors: i64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for crates.json and sensors.json; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Periodic readings from a fleet.
    Trace {
        #[arg(long)]
        sensors: i64,
        #[arg(long, default_value_t = 20.0)]
        period: f64,
        #[arg(long)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// First send time, epoch seconds.
        #[arg(long)]
        start: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RunCommand {
    /// Send a trace to the TCP intake channel.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        /// Time compression; 0 sends as fast as possible.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// tcp://host:port; defaults to the config's tcp_test address.
        #[arg(long)]
        target: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Derived events for a trace, one JSON document per line.
    Derive {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        /// Fleet directory used to type the readings.
        #[arg(long)]
        fleet: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Streaming engine against the reference on seeded random cases.
    Sweep {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first: u64,
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum MeasureCommand {
    Latency(LatencyArgs),
}

#[derive(Debug, Args)]
pub struct LatencyArgs {
    #[arg(long)]
    pub sensors: i64,
    /// Aggregate messages per second.
    #[arg(long, conflicts_with = "period")]
    pub rate: Option<f64>,
    /// Per-sensor reporting period in seconds; rate = sensors / period.
    #[arg(long)]
    pub period: Option<f64>,
    #[arg(long)]
    pub duration: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10.0)]
    pub drain: f64,
    /// Measure the server named by --config instead of starting one.
    #[arg(long, requires = "config")]
    pub remote: bool,
    #[arg(long)]
    pub max_p50_ms: Option<f64>,
    #[arg(long)]
    pub max_p95_ms: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum SeedCommand {
    /// Load the seed building, its sample sensor and optionally a fleet into
    /// the metadata store under the config's data directory.
    Load {
        #[arg(long)]
        fleet: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command; returns the exit code.
pub async fn main_with(args: impl IntoIterator<Item = OsString>, out: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli, out).await {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("simcli: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Option<Config>> {
    path.map(|p| Config::load(p).map_err(|e| SimError::Usage(e.to_string()))).transpose()
}

fn positive(n: i64, what: &str) -> Result<usize> {
    if n <= 0 {
        return Err(SimError::Usage(format!("{what} must be at least 1")));
    }
    usize::try_from(n).map_err(|_| SimError::Usage(format!("{what} is too large")))
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| SimError::runtime("encoding", e))?;
    writeln!(out, "{text}").map_err(|e| SimError::runtime("writing output", e))
}

async fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Gen(GenCommand::Fleet { sensors, seed, out: dir }) => {
            let fleet = gen_fleet(positive(sensors, "--sensors")?, seed)?;
            match dir {
                Some(dir) => write_fleet(&fleet, &dir),
                None => emit(out, &fleet),
            }
        }
        Command::Gen(GenCommand::Trace { sensors, period, duration, seed, start, out: path }) => {
            let start = match start {
                Some(s) => Timestamp::parse(&s).map_err(|e| SimError::Usage(e.to_string()))?,
                None => Timestamp::from_secs(DEFAULT_START_SECS),
            };
            let trace = gen_trace(TraceParams {
                sensors: positive(sensors, "--sensors")?,
                period_s: period,
                duration_s: duration,
                seed,
                start,
            })?;
            match path {
                Some(p) => save_trace(&trace, &p),
                None => write_trace(&trace, out),
            }
        }
        Command::Run(RunCommand::Replay { trace, speed, target }) => {
            let target = match (target, config.as_ref().and_then(|c| c.ingest.tcp_test)) {
                (Some(t), _) => t,
                (None, Some(addr)) => addr.to_string(),
                (None, None) => return Err(SimError::Usage("--target or a config with tcp_test is required".into())),
            };
            let trace = load_trace(&trace)?;
            emit(out, &replay(&trace, speed, &target).await?)
        }
        Command::Oracle(OracleCommand::Derive { trace, rules, fleet, out: path }) => {
            let trace = load_trace(&trace)?;
            let rules_text = std::fs::read_to_string(&rules)
                .map_err(|e| SimError::Usage(format!("reading {}: {e}", rules.display())))?;
            let rules = RuleFile::from_json(&rules_text).map_err(|e| SimError::Usage(e.to_string()))?;
            let sensors = fleet.map(|d| read_fleet(&d)).transpose()?.map(|f| f.sensors);
            let derived = detect::oracle_derive(&trace, &rules, sensors.as_deref())?;
            let mut text = String::new();
            for d in &derived {
                text.push_str(&serde_json::to_string(d).map_err(|e| SimError::runtime("encoding", e))?);
                text.push('\n');
            }
            match path {
                Some(p) => std::fs::write(&p, text).map_err(|e| SimError::runtime("writing output", e)),
                None => out.write_all(text.as_bytes()).map_err(|e| SimError::runtime("writing output", e)),
            }
        }
        Command::Oracle(OracleCommand::Sweep { seeds, first, sequential }) => {
            let mode = if sequential { ExecMode::Sequential } else { ExecMode::default() };
            let report = detect::sweep((first..first.saturating_add(seeds)).collect(), mode);
            emit(out, &report)?;
            let bad: Vec<u64> = report.mismatches().map(|c| c.seed).collect();
            if bad.is_empty() {
                Ok(())
            } else {
                Err(SimError::Regression(format!("streaming output differs from the reference for seeds {bad:?}")))
            }
        }
        Command::Measure(MeasureCommand::Latency(a)) => {
            let sensors = positive(a.sensors, "--sensors")?;
            let rate = match (a.rate, a.period) {
                (Some(r), _) => r,
                (None, Some(p)) if p > 0.0 => sensors as f64 / p,
                _ => return Err(SimError::Usage("one of --rate or a positive --period is required".into())),
            };
            let endpoint = if a.remote {
                let c = config.as_ref().expect("clap requires --config");
                let tcp = c.ingest.tcp_test.ok_or_else(|| SimError::Usage("config has no tcp_test address".into()))?;
                Endpoint::Remote { http: c.server.listen, tcp }
            } else {
                Endpoint::InProcess(None)
            };
            let params = LatencyParams { sensors, rate, duration_s: a.duration, seed: a.seed, drain_s: a.drain };
            let report = measure_latency(params, endpoint).await?;
            emit(out, &report)?;
            if report.loss > 0 && rate <= LOSSLESS_RATE {
                return Err(SimError::Regression(format!("lost {} of {} messages", report.loss, report.sent)));
            }
            if let Some(storage) = report.storage.as_ref().filter(|s| !s.complete()) {
                return Err(SimError::Regression(format!("storage incomplete: {storage:?}")));
            }
            for (limit, got, name) in [(a.max_p50_ms, report.p50_ms, "p50"), (a.max_p95_ms, report.p95_ms, "p95")] {
                if let Some(limit) = limit.filter(|l| got > *l) {
                    return Err(SimError::Regression(format!("{name} {got:.1} ms exceeds {limit} ms")));
                }
            }
            Ok(())
        }
        Command::Seed(SeedCommand::Load { fleet }) => {
            let config = config.ok_or_else(|| SimError::Usage("seed load needs --config".into()))?;
            let store = MetadataStore::open(config.data_dir.join("meta")).map_err(|e| SimError::runtime("opening store", e))?;
            let mut crates = seed::crates();
            let mut sensors = vec![seed::reference_sensor()];
            if let Some(dir) = fleet {
                let f: fleet::Fleet = read_fleet(&dir)?;
                crates.extend(f.crates);
                sensors.extend(f.sensors);
            }
            let c = store.put_crates(crates).map_err(|e| SimError::runtime("loading crates", e))?;
            let s = store.put_sensors(sensors).map_err(|e| SimError::runtime("loading sensors", e))?;
            emit(out, &serde_json::json!({"crates": c, "sensors": s}))
        }
    }
}
