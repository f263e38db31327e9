//! Deterministic simulator and control stack for a backdrivable, low-gear-ratio
//! actuation module driving a tendon winch or a rotational joint.
//!
//! The crate is organised along the signal path:
//!
//! * [`actuator`]: motor, transmission, encoder and winch plant model.
//! * [`loads`]: external loads (hanging weight, flexible beam, torque pulses).
//! * [`control`]: 1 kHz position controllers and Ziegler–Nichols tuning.
//! * [`trajectory`]: step, staircase and C⁴-smooth references.
//! * [`bus`]: CAN-style frame codec and latency model between the two loops.
//! * [`sim`]: fixed-step two-rate scheduler and seeded noise.
//! * [`proprioception`]: load estimation and disturbance detection.
//! * [`experiments`]: scenario presets, config files, metrics and CSV output.

pub mod actuator;
mod error;
pub mod bus;
pub mod control;
pub mod experiments;
pub mod loads;
pub mod proprioception;
pub mod sim;
pub mod trajectory;

pub use actuator::{ActuatorParams, JointView, Measurement, PlantState};
pub use error::ParamError;
pub use control::{ControllerKind, ControllerSpec, GainSet};
pub use loads::LoadModel;
pub use sim::{run_scenario, NoiseConfig, SimConfig, SimError};
pub use trajectory::ReferenceSignal;

/// Standard gravity used for hanging-weight loads, m/s².
pub const GRAVITY: f64 = 9.81;
