//! Scenario configuration files.
//!
//! A config is a TOML document with one table per module. The effective
//! config of a run is built in layers: scenario preset, then the config file,
//! then `--set key=value` overrides, then an explicit seed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::actuator::{ActuatorParams, CouplingMode};
use crate::control::{ControllerKind, ControllerSpec, GainSet};
use crate::error::{non_negative, positive, ParamError};
use crate::loads::{LoadModel, Pulse};
use crate::proprioception::DetectorConfig;
use crate::sim::SimConfig;
use crate::trajectory::ReferenceSignal;

use super::record::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Tune,
    Step,
    Staircase,
    Trajectory,
    BeamStep,
    BeamTrajectory,
    Disturbance,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Tune,
        Scenario::Step,
        Scenario::Staircase,
        Scenario::Trajectory,
        Scenario::BeamStep,
        Scenario::BeamTrajectory,
        Scenario::Disturbance,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Tune => "tune",
            Scenario::Step => "step",
            Scenario::Staircase => "staircase",
            Scenario::Trajectory => "trajectory",
            Scenario::BeamStep => "beam-step",
            Scenario::BeamTrajectory => "beam-trajectory",
            Scenario::Disturbance => "disturbance",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| ConfigError::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown scenario {0:?} (expected one of tune, step, staircase, trajectory, beam-step, beam-trajectory, disturbance)")]
    UnknownScenario(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("bad override {0:?}: expected key=value with a dotted key")]
    BadOverride(String),
    #[error("override {key:?} descends into non-table value")]
    NotATable { key: String },
    #[error("invalid config: {0}")]
    Invalid(#[from] ParamError),
}

/// Knobs that only some scenarios use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    /// Hanging masses, kg (staircase: one PD and one PDg run each; trajectory: first entry).
    pub masses: Vec<f64>,
    /// Step height for tuning, mm.
    pub step_mm: f64,
    /// Pulses with |torque| at or below this form the low-torque subset, N·m.
    pub low_torque_limit: f64,
    /// Slack after a pulse ends within which a detection still counts, s.
    pub match_tolerance: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            masses: Vec::new(),
            step_mm: 1.0,
            low_torque_limit: 0.01,
            match_tolerance: 0.3,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        for &m in &self.masses {
            non_negative("scenario.masses", m)?;
        }
        positive("scenario.step_mm", self.step_mm)?;
        non_negative("scenario.low_torque_limit", self.low_torque_limit)?;
        non_negative("scenario.match_tolerance", self.match_tolerance)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub plant: ActuatorParams,
    pub load: LoadModel,
    pub controller: ControllerSpec,
    pub reference: ReferenceSignal,
    pub detector: DetectorConfig,
    pub scenario: ScenarioParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            plant: ActuatorParams::default(),
            load: LoadModel::Null,
            controller: ControllerSpec::default(),
            reference: ReferenceSignal::hold(0.0),
            detector: DetectorConfig::default(),
            scenario: ScenarioParams::default(),
        }
    }
}

/// Alternating staircase 1, −1, 2, −2, …, 7, −7, −8 mm.
pub fn staircase_levels() -> Vec<f64> {
    let mut levels: Vec<f64> = (1..=7).flat_map(|h| [h as f64, -(h as f64)]).collect();
    levels.push(-8.0);
    levels
}

/// Five pulses: three small (0.005 N·m) and two large (0.02 N·m), 0.1 s each.
pub fn default_pulses() -> Vec<Pulse> {
    [(1.0, 0.005), (2.5, -0.005), (4.0, 0.005), (5.5, 0.02), (7.0, -0.02)]
        .into_iter()
        .map(|(start, torque)| Pulse {
            start,
            duration: 0.1,
            torque,
        })
        .collect()
}

impl ExperimentConfig {
    pub fn preset(scenario: Scenario) -> Self {
        let mut c = Self::default();
        match scenario {
            Scenario::Tune => {
                c.sim.duration = 3.0;
                c.controller = ControllerSpec::new(ControllerKind::P, GainSet::zero());
                c.reference = ReferenceSignal::Step { height: 1.0, at: 0.0 };
            }
            Scenario::Step => {
                c.sim.duration = 4.0;
                c.reference = ReferenceSignal::Step { height: 1.0, at: 0.0 };
            }
            Scenario::Staircase => {
                let levels = staircase_levels();
                c.sim.duration = levels.len() as f64 * 2.0;
                c.reference = ReferenceSignal::Staircase { levels, dwell: 2.0 };
                c.scenario.masses = vec![0.2, 0.54, 1.0];
            }
            Scenario::Trajectory => {
                c.sim.duration = 6.0;
                c.reference = ReferenceSignal::smooth_path(&[0.0, 7.0, -8.0, 0.0], 2.0, 0.0);
                c.scenario.masses = vec![1.1];
            }
            Scenario::BeamStep => {
                c.sim.duration = 8.0;
                c.load = LoadModel::flexible_beam();
                c.reference = ReferenceSignal::Staircase {
                    levels: vec![2.0, 0.0, 3.0, 0.0],
                    dwell: 2.0,
                };
            }
            Scenario::BeamTrajectory => {
                c.sim.duration = 8.0;
                c.load = LoadModel::flexible_beam();
                c.reference = ReferenceSignal::Composite {
                    parts: vec![
                        ReferenceSignal::Smooth {
                            start: 0.0,
                            end: 20.0,
                            t0: 0.0,
                            duration: 3.0,
                        },
                        ReferenceSignal::Smooth {
                            start: 20.0,
                            end: 0.0,
                            t0: 4.0,
                            duration: 3.0,
                        },
                    ],
                };
            }
            Scenario::Disturbance => {
                c.sim.duration = 8.5;
                c.plant.mode = CouplingMode::RotationalJoint;
                c.load = LoadModel::Pulses {
                    schedule: default_pulses(),
                };
            }
        }
        c
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.sim.validate()?;
        // TOML integers are i64, so larger seeds could not be read back from the echo
        if i64::try_from(self.sim.seed).is_err() {
            return Err(ParamError::Invalid(format!("sim.seed = {} exceeds {}", self.sim.seed, i64::MAX)));
        }
        self.plant.validate()?;
        self.load.validate()?;
        self.controller.gains.validate()?;
        self.reference.validate()?;
        self.detector.validate()?;
        self.scenario.validate()
    }

    /// Preset, overlaid with an optional config document, `key=value`
    /// overrides and an optional seed.
    pub fn build(
        scenario: Scenario,
        file: Option<&str>,
        overrides: &[String],
        seed: Option<u64>,
    ) -> Result<Self, ConfigError> {
        let mut table = to_table(&Self::preset(scenario))?;
        if let Some(text) = file {
            let doc: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
            merge(&mut table, doc);
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: Self = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        if let Some(seed) = seed {
            cfg.sim.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML form of the effective config.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// sha256 of [`echo`](Self::echo), hex.
    pub fn hash(&self) -> String {
        sha256_hex(self.echo().as_bytes())
    }
}

fn to_table(cfg: &ExperimentConfig) -> Result<Table, ConfigError> {
    Table::try_from(cfg).map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Recursive overlay. A table carrying a different `kind` replaces the base
/// table instead of merging, so switching variants does not inherit fields.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => {
                if o.contains_key("kind") && o.get("kind") != b.get("kind") {
                    *b = o;
                } else {
                    merge(b, o);
                }
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Apply one `dotted.key=value` override. Values are parsed as TOML, falling
/// back to a bare string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(spec.to_string()));
    }
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for p in parents {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = entry.as_table_mut().ok_or_else(|| ConfigError::NotATable {
            key: key.to_string(),
        })?;
    }
    let value = parse_value(raw);
    match (node.get_mut(*last), value) {
        (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
        (_, v) => {
            node.insert(last.to_string(), v);
        }
    }
    Ok(())
}
