//! Named experiments, their configuration and their on-disk artifacts.
//!
//! An experiment writes into one output directory:
//!
//! * `config.toml`: the effective config; rerunning from it reproduces every run.
//! * `<run>/run.csv`: one row per position-loop tick.
//! * `metrics.csv`: long format `run,metric,value`.
//! * `events.csv`: disturbance detections `label,t_start,t_end,channel,peak`.

pub mod config;
pub mod metrics;
pub mod record;
mod scenarios;

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::control::{ControlError, TuneError, ZnResult};
use crate::error::ParamError;
use crate::proprioception::DetectionEvent;
use crate::sim::SimError;

pub use config::{ConfigError, ExperimentConfig, Scenario};
pub use metrics::{compute_metrics, Metrics, MetricsError, Segment};
pub use record::{Row, RunMeta, RunRecord};

use record::fmt_float;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid parameter: {0}")]
    Param(#[from] ParamError),
    #[error("run {0}: {1}")]
    Run(String, SimError),
    #[error("tuning failed: {0}")]
    Tune(#[from] TuneError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("writing artifacts: {0}")]
    Io(#[from] io::Error),
}

impl ExperimentError {
    /// Whether the failure comes from the inputs rather than from running them.
    pub fn is_bad_input(&self) -> bool {
        matches!(self, ExperimentError::Config(_) | ExperimentError::Param(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub run: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub scenario: Scenario,
    pub config: ExperimentConfig,
    pub runs: Vec<(String, RunRecord)>,
    pub metrics: Vec<MetricRow>,
    /// Detections with the label of the run they came from.
    pub events: Vec<(String, DetectionEvent)>,
    pub tuning: Option<ZnResult>,
}

impl ScenarioOutput {
    pub fn run(&self, label: &str) -> Option<&RunRecord> {
        self.runs.iter().find(|(l, _)| l == label).map(|(_, r)| r)
    }

    pub fn metric(&self, run: &str, metric: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.run == run && m.metric == metric)
            .map(|m| m.value)
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("run,metric,value\n");
        for m in &self.metrics {
            let _ = writeln!(out, "{},{},{}", m.run, m.metric, fmt_float(m.value));
        }
        out
    }

    pub fn events_csv(&self) -> String {
        let mut out = String::from("label,t_start,t_end,channel,peak\n");
        for (label, e) in &self.events {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                label,
                fmt_float(e.t_start),
                fmt_float(e.t_end),
                e.channel.name(),
                fmt_float(e.peak)
            );
        }
        out
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), self.config.echo())?;
        for (label, rec) in &self.runs {
            let run_dir = dir.join(label);
            std::fs::create_dir_all(&run_dir)?;
            rec.write_csv(&run_dir.join("run.csv"))?;
        }
        std::fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        std::fs::write(dir.join("events.csv"), self.events_csv())?;
        Ok(())
    }
}

/// Run a scenario with an already-built config.
pub fn run_experiment(
    scenario: Scenario,
    config: &ExperimentConfig,
) -> Result<ScenarioOutput, ExperimentError> {
    config.validate()?;
    scenarios::run(scenario, config)
}
