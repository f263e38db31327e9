//! Fixed-step, two-rate simulation engine.
//!
//! The plant is integrated at the low-level period `dt_low`. Every
//! `rate_ratio` physics steps the high-level loop samples the sensors, runs
//! the position controller and ships a command frame over the bus. A scenario
//! run is a pure function of its inputs: all randomness comes from a seeded
//! ChaCha generator, one independent stream per noise channel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuator::{
    current_loop, dissipation_coefficient, drive_torque, tendon_from_counts, validate_state,
    ActuatorParams, JointView, Measurement, PlantState, Sensor, VELOCITY_WINDOW,
};
use crate::bus::{self, BusError, CommandFrame, StatusFrame, Transport};
use crate::control::{Controller, ControllerSpec};
use crate::error::{non_negative, positive, ParamError};
use crate::experiments::record::{Row, RunRecord};
use crate::loads::LoadModel;
use crate::trajectory::ReferenceSignal;

/// Noise channel ids; each gets its own generator stream.
pub const CHANNEL_CURRENT_SENSE: u64 = 1;
pub const CHANNEL_TORQUE_DISTURBANCE: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation of the current measurement, A.
    pub current_sense_sigma: f64,
    /// Standard deviation of a white joint torque disturbance, N·m.
    pub torque_disturbance_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            current_sense_sigma: 0.05,
            torque_disturbance_sigma: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self {
            current_sense_sigma: 0.0,
            torque_disturbance_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        non_negative("sim.noise.current_sense_sigma", self.current_sense_sigma)?;
        non_negative("sim.noise.torque_disturbance_sigma", self.torque_disturbance_sigma)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Physics and current-loop step, s.
    pub dt_low: f64,
    /// Physics steps per position-loop tick.
    pub rate_ratio: u32,
    /// s
    pub duration: f64,
    pub seed: u64,
    /// Command delay over the bus, in position-loop ticks.
    pub latency_ticks: u32,
    pub module_id: u8,
    pub noise: NoiseConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_low: 1e-4,
            rate_ratio: 10,
            duration: 1.0,
            seed: 1,
            latency_ticks: 1,
            module_id: 0,
            noise: NoiseConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        positive("sim.dt_low", self.dt_low)?;
        non_negative("sim.duration", self.duration)?;
        if self.rate_ratio == 0 {
            return Err(ParamError::OutOfRange {
                name: "sim.rate_ratio",
                value: 0.0,
                constraint: ">= 1",
            });
        }
        self.noise.validate()
    }

    /// Position-loop period, s.
    pub fn dt_high(&self) -> f64 {
        self.dt_low * self.rate_ratio as f64
    }

    pub fn physics_steps(&self) -> u64 {
        (self.duration / self.dt_low).round() as u64
    }

    pub fn high_ticks(&self) -> u64 {
        self.physics_steps().div_ceil(self.rate_ratio as u64)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    Param(#[from] ParamError),

    #[error("plant state became non-finite at t = {time:.6} s (theta = {theta}, omega = {omega}); the gain set is probably unstable")]
    NonFinite { time: f64, theta: f64, omega: f64 },

    #[error("bus: {0}")]
    Bus(#[from] BusError),
}

/// Generator for one noise channel, independent of every other channel.
pub fn noise_stream(seed: u64, channel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(channel);
    rng
}

/// Advance the plant by one semi-implicit Euler step.
///
/// The current relaxes first, then velocity is updated with the friction
/// treated implicitly (so it can only remove energy), then the angle is
/// advanced with the new velocity.
pub fn step_physics(
    state: &PlantState,
    command_current: f64,
    load_torque: f64,
    params: &ActuatorParams,
    dt: f64,
) -> Result<PlantState, SimError> {
    let current = current_loop(command_current, state, params, dt);
    let drive = drive_torque(state.theta, current, load_torque, params);
    let damping = dissipation_coefficient(state.omega, params);
    let omega = (state.omega + dt * drive / params.inertia)
        / (1.0 + dt * damping / params.inertia);
    let theta = state.theta + omega * dt;
    let next = PlantState {
        theta,
        omega,
        current,
        encoder_count: params.quantize(theta),
        time: state.time + dt,
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(SimError::NonFinite {
            time: next.time,
            theta,
            omega,
        })
    }
}

/// Run one closed-loop scenario from rest and log one row per high-level tick.
pub fn run_scenario(
    config: &SimConfig,
    plant: &ActuatorParams,
    load: &LoadModel,
    controller: &ControllerSpec,
    reference: &ReferenceSignal,
) -> Result<RunRecord, SimError> {
    run_from(config, plant, load, controller, reference, PlantState::at_rest())
}

/// Like [`run_scenario`] but starting from an arbitrary plant state.
pub fn run_from(
    config: &SimConfig,
    plant: &ActuatorParams,
    load: &LoadModel,
    controller: &ControllerSpec,
    reference: &ReferenceSignal,
    initial: PlantState,
) -> Result<RunRecord, SimError> {
    config.validate()?;
    plant.validate()?;
    load.validate()?;
    controller.validate()?;
    reference.validate()?;
    validate_state(&initial)?;
    if plant.current_limit * 1000.0 > i16::MAX as f64 {
        return Err(ParamError::Invalid(
            "plant.current_limit exceeds the command frame range (32.767 A)".into(),
        )
        .into());
    }

    let dt = config.dt_low;
    let dt_high = config.dt_high();
    let ratio = config.rate_ratio as u64;
    let steps = config.physics_steps();

    let mut current_rng = noise_stream(config.seed, CHANNEL_CURRENT_SENSE);
    let mut torque_rng = noise_stream(config.seed, CHANNEL_TORQUE_DISTURBANCE);
    let torque_noise = (config.noise.torque_disturbance_sigma > 0.0)
        .then(|| Normal::new(0.0, config.noise.torque_disturbance_sigma))
        .transpose()
        .map_err(|e| ParamError::Invalid(e.to_string()))?;

    let mut state = PlantState {
        encoder_count: plant.quantize(initial.theta),
        time: 0.0,
        ..initial
    };
    let mut sensor = Sensor::new(dt_high, VELOCITY_WINDOW);
    let mut ctrl = Controller::new(controller.clone(), plant);
    let mut link: Transport<bus::Payload> = Transport::new(config.latency_ticks as u64);
    let counts_per_mm = plant.counts_per_mm();

    let mut record = RunRecord::new(config.seed);
    record.rows.reserve(config.high_ticks() as usize);
    // until the first command arrives the drive holds the current it starts with
    let mut applied_current = initial.current;
    let mut last_seq: Option<u16> = None;
    let mut low_in_tick = 0u32;

    for step in 0..steps {
        let t = step as f64 * dt;
        state.time = t;

        if step % ratio == 0 {
            let tick = step / ratio;
            if tick > 0 {
                record.low_ticks_per_row.push(low_in_tick);
            }
            low_in_tick = 0;
            let seq = tick as u16;

            // low-level side samples the sensors and reports over the bus
            let sample = sensor.sense(&state, config.noise.current_sense_sigma, &mut current_rng);
            let status = StatusFrame {
                module_id: config.module_id,
                sequence: seq,
                position: sample.encoder_count,
                velocity_q8: StatusFrame::velocity_field(sample.velocity_estimate),
                current_ma: StatusFrame::current_field(sample.sensed_current),
            };
            let status = StatusFrame::decode(config.module_id, &status.encode()?)?;
            let measurement = Measurement {
                encoder_count: status.position,
                velocity_estimate: status.velocity_counts_per_s(),
                sensed_current: bus::ma_to_amps(status.current_ma as i64),
            };

            // high-level side
            let (setpoint, setpoint_velocity) = reference.evaluate(t);
            let out = ctrl.step(setpoint, setpoint_velocity, &measurement, dt_high);
            if out.saturated {
                record.saturated_ticks += 1;
            }
            let frame = CommandFrame {
                module_id: config.module_id,
                sequence: seq,
                current_ma: bus::amps_to_ma(out.command) as i32,
                flags: bus::FLAG_ENABLE,
            };
            link.send(tick, frame.encode()?);

            // low-level side picks up whatever command is due this tick
            if let Some(payload) = link.latest(tick) {
                let cmd = CommandFrame::decode(&payload)?;
                if let Some(prev) = last_seq {
                    debug_assert_ne!(cmd.sequence, prev, "stale command delivered twice");
                }
                last_seq = Some(cmd.sequence);
                applied_current = if cmd.flags & bus::FLAG_ENABLE != 0 {
                    cmd.current_amps()
                } else {
                    0.0
                };
            }

            let joint = JointView::from_state(&state, plant);
            record.rows.push(Row {
                t,
                setpoint_mm: setpoint,
                setpoint_vel_mm_s: setpoint_velocity,
                position_mm: tendon_from_counts(measurement.encoder_count, plant),
                velocity_mm_s: measurement.velocity_estimate / counts_per_mm,
                true_current_a: state.current,
                sensed_current_a: measurement.sensed_current,
                command_current_a: out.command,
                load_torque_nm: load.joint_torque(&joint, t, plant),
                encoder_count: measurement.encoder_count,
                velocity_counts_s: measurement.velocity_estimate,
            });
        }

        let joint = JointView::from_state(&state, plant);
        let mut load_torque = load.joint_torque(&joint, t, plant);
        if let Some(noise) = &torque_noise {
            load_torque += noise.sample(&mut torque_rng);
        }
        state = step_physics(&state, applied_current, load_torque, plant, dt)?;
        record.physics_steps += 1;
        low_in_tick += 1;
    }
    if !record.rows.is_empty() {
        record.low_ticks_per_row.push(low_in_tick);
    }
    record.final_state = state;
    Ok(record)
}
