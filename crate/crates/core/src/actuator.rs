//! Plant model of one actuation module: a brushless motor with cogging ripple,
//! viscous and Coulomb friction, a 4:1 gear stage, an optical encoder and a
//! winch drum.
//!
//! All plant quantities live on the motor shaft. The joint (gear output) and
//! the tendon are views derived through the gear ratio and the drum radius.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{finite, non_negative, positive, ParamError};

/// Velocity scale of the tanh-smoothed Coulomb friction, rad/s.
pub const FRICTION_VELOCITY_EPS: f64 = 1e-3;

/// Default moving-average window of the velocity estimator, in samples.
pub const VELOCITY_WINDOW: usize = 16;

/// How the gear output is coupled to the robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMode {
    /// Output drives a drum that winds a tendon.
    #[default]
    TendonWinch,
    /// Output drives a rotational joint directly (e.g. a tube rotation stage).
    RotationalJoint,
}

/// Motor, transmission, encoder and winch constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorParams {
    /// Torque constant, N·m/A.
    ///
    /// Chosen so that 1 kg hanging from the drum is held by exactly 1 A.
    /// The nominal KV300 rating would give 60 / (2π · 300) ≈ 0.0318 N·m/A.
    pub kt: f64,
    /// Rotor plus gear inertia seen at the motor shaft, kg·m².
    pub inertia: f64,
    /// Viscous friction, N·m·s/rad.
    pub viscous_friction: f64,
    /// Coulomb friction, N·m.
    pub coulomb_friction: f64,
    /// Peak cogging torque, N·m.
    pub cog_amplitude: f64,
    pub pole_pairs: u32,
    /// Motor turns per output turn.
    pub gear_ratio: f64,
    /// Winch drum radius, m.
    pub drum_radius: f64,
    /// Encoder counts per motor revolution.
    pub encoder_cpr: u32,
    /// Winding current limit, A.
    pub current_limit: f64,
    /// Time constant of the inner current loop, s. Zero means ideal tracking.
    pub current_loop_tau: f64,
    pub mode: CouplingMode,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        Self {
            kt: 0.022071,
            inertia: 1e-5,
            viscous_friction: 1e-5,
            coulomb_friction: 5e-4,
            cog_amplitude: 2e-4,
            pole_pairs: 12,
            gear_ratio: 4.0,
            drum_radius: 0.009,
            encoder_cpr: 5000,
            current_limit: 6.0,
            current_loop_tau: 5e-4,
            mode: CouplingMode::TendonWinch,
        }
    }
}

impl ActuatorParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        positive("plant.kt", self.kt)?;
        positive("plant.inertia", self.inertia)?;
        non_negative("plant.viscous_friction", self.viscous_friction)?;
        non_negative("plant.coulomb_friction", self.coulomb_friction)?;
        non_negative("plant.cog_amplitude", self.cog_amplitude)?;
        positive("plant.gear_ratio", self.gear_ratio)?;
        positive("plant.drum_radius", self.drum_radius)?;
        positive("plant.encoder_cpr", self.encoder_cpr as f64)?;
        positive("plant.current_limit", self.current_limit)?;
        non_negative("plant.current_loop_tau", self.current_loop_tau)?;
        Ok(())
    }

    /// Tendon millimetres per radian of motor rotation.
    pub fn mm_per_motor_rad(&self) -> f64 {
        self.drum_radius * 1000.0 / self.gear_ratio
    }

    /// Encoder counts per millimetre of tendon.
    pub fn counts_per_mm(&self) -> f64 {
        self.encoder_cpr as f64 / (TAU * self.mm_per_motor_rad())
    }

    /// Motor current whose torque balances a tendon tension at rest.
    pub fn holding_current(&self, tension: f64) -> f64 {
        tension * self.drum_radius / (self.gear_ratio * self.kt)
    }

    /// Tendon tension balanced by a motor current at rest.
    pub fn tension_from_current(&self, current: f64) -> f64 {
        current * self.kt * self.gear_ratio / self.drum_radius
    }

    /// Encoder count for a motor angle (floor quantization).
    pub fn quantize(&self, theta: f64) -> i64 {
        (theta / TAU * self.encoder_cpr as f64).floor() as i64
    }
}

/// Continuous plant state at the motor shaft plus the quantized encoder count.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    /// Motor angle, rad.
    pub theta: f64,
    /// Motor velocity, rad/s.
    pub omega: f64,
    /// Actual winding current, A.
    pub current: f64,
    pub encoder_count: i64,
    pub time: f64,
}

impl PlantState {
    pub fn at_rest() -> Self {
        Self::default()
    }

    /// State at rest at the given motor angle, with a consistent encoder count.
    pub fn at_angle(theta: f64, params: &ActuatorParams) -> Self {
        Self {
            theta,
            encoder_count: params.quantize(theta),
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.omega.is_finite() && self.current.is_finite()
    }
}

/// Joint and tendon quantities derived from the motor state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointView {
    pub joint_angle: f64,
    pub joint_velocity: f64,
    /// Pulled tendon length, mm (positive = pulled onto the drum).
    pub tendon_length: f64,
    /// mm/s
    pub tendon_velocity: f64,
}

impl JointView {
    pub fn from_state(state: &PlantState, params: &ActuatorParams) -> Self {
        let joint_angle = state.theta / params.gear_ratio;
        let joint_velocity = state.omega / params.gear_ratio;
        Self {
            joint_angle,
            joint_velocity,
            tendon_length: joint_angle * params.drum_radius * 1000.0,
            tendon_velocity: joint_velocity * params.drum_radius * 1000.0,
        }
    }
}

/// Smoothed sign used by the Coulomb friction term.
pub fn smooth_sign(omega: f64) -> f64 {
    (omega / FRICTION_VELOCITY_EPS).tanh()
}

/// Cogging torque at a motor angle, N·m.
pub fn cogging_torque(theta: f64, params: &ActuatorParams) -> f64 {
    params.cog_amplitude * (params.pole_pairs as f64 * theta).sin()
}

/// Torque that does not depend on velocity: motor torque, cogging and the
/// reflected external joint torque.
pub fn drive_torque(
    theta: f64,
    current: f64,
    external_joint_torque: f64,
    params: &ActuatorParams,
) -> f64 {
    params.kt * current - cogging_torque(theta, params) + external_joint_torque / params.gear_ratio
}

/// Friction torque `b·ω + τc·tanh(ω/ε)` written as `c(ω)·ω`; returns `c(ω) ≥ 0`.
pub fn dissipation_coefficient(omega: f64, params: &ActuatorParams) -> f64 {
    let x = omega / FRICTION_VELOCITY_EPS;
    // tanh(x)/x -> 1 as x -> 0
    let ratio = if x.abs() < 1e-8 { 1.0 } else { x.tanh() / x };
    params.viscous_friction + params.coulomb_friction * ratio / FRICTION_VELOCITY_EPS
}

/// Angular acceleration of the motor shaft, rad/s².
pub fn torque_balance(
    state: &PlantState,
    command_current: f64,
    external_joint_torque: f64,
    params: &ActuatorParams,
) -> f64 {
    let friction = params.viscous_friction * state.omega
        + params.coulomb_friction * smooth_sign(state.omega);
    (drive_torque(state.theta, command_current, external_joint_torque, params) - friction)
        / params.inertia
}

/// Advance the winding current one step toward the clamped command.
pub fn current_loop(command: f64, state: &PlantState, params: &ActuatorParams, dt: f64) -> f64 {
    let limit = params.current_limit;
    let target = command.clamp(-limit, limit);
    if params.current_loop_tau <= 0.0 {
        return target;
    }
    let decay = (-dt / params.current_loop_tau).exp();
    (target + (state.current - target) * decay).clamp(-limit, limit)
}

/// Encoder counts corresponding to a tendon displacement.
pub fn counts_from_tendon(delta_mm: f64, params: &ActuatorParams) -> i64 {
    (delta_mm * params.counts_per_mm()).round() as i64
}

/// Tendon displacement in mm corresponding to an encoder count.
pub fn tendon_from_counts(counts: i64, params: &ActuatorParams) -> f64 {
    counts as f64 / params.counts_per_mm()
}

/// One high-level sample of the module's sensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub encoder_count: i64,
    /// Moving average of differenced counts, counts/s.
    pub velocity_estimate: f64,
    /// Winding current with sensing noise, A.
    pub sensed_current: f64,
}

/// Encoder differencing velocity estimator plus noisy current sensing.
#[derive(Debug, Clone)]
pub struct Sensor {
    period: f64,
    diffs: Vec<i64>,
    next: usize,
    prev_count: Option<i64>,
}

impl Sensor {
    /// `period` is the sampling period (the high-level period), `window` the
    /// moving-average length in samples.
    pub fn new(period: f64, window: usize) -> Self {
        let window = window.max(1);
        Self {
            period,
            diffs: vec![0; window],
            next: 0,
            prev_count: None,
        }
    }

    pub fn window(&self) -> usize {
        self.diffs.len()
    }

    /// Sample the plant. The noise generator is only drawn from when
    /// `current_sense_sigma > 0`.
    pub fn sense<R: Rng + ?Sized>(
        &mut self,
        state: &PlantState,
        current_sense_sigma: f64,
        rng: &mut R,
    ) -> Measurement {
        let count = state.encoder_count;
        let diff = self.prev_count.map_or(0, |prev| count - prev);
        self.prev_count = Some(count);
        self.diffs[self.next] = diff;
        self.next = (self.next + 1) % self.diffs.len();

        let sum: i64 = self.diffs.iter().sum();
        let velocity_estimate = sum as f64 / (self.diffs.len() as f64 * self.period);

        let sensed_current = if current_sense_sigma > 0.0 {
            let n: f64 = rng.sample(StandardNormal);
            state.current + current_sense_sigma * n
        } else {
            state.current
        };

        Measurement {
            encoder_count: count,
            velocity_estimate,
            sensed_current,
        }
    }
}

pub(crate) fn validate_state(state: &PlantState) -> Result<(), ParamError> {
    finite("state.theta", state.theta)?;
    finite("state.omega", state.omega)?;
    finite("state.current", state.current)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rest_has_zero_acceleration() {
        let p = ActuatorParams::default();
        assert_eq!(torque_balance(&PlantState::at_rest(), 0.0, 0.0, &p), 0.0);
    }

    #[test]
    fn one_amp_holds_one_kilogram() {
        let p = ActuatorParams {
            cog_amplitude: 0.0,
            ..Default::default()
        };
        let weight_torque = -crate::GRAVITY * p.drum_radius;
        let acc = torque_balance(&PlantState::at_rest(), 1.0, weight_torque, &p);
        // net torque 0.022071 - 0.0220725 N·m
        assert!((acc * p.inertia).abs() < 2e-6, "residual torque {}", acc * p.inertia);
    }

    #[test]
    fn cogging_is_linear_in_amplitude() {
        let p1 = ActuatorParams::default();
        let p2 = ActuatorParams {
            cog_amplitude: 2.0 * p1.cog_amplitude,
            ..Default::default()
        };
        let theta = 0.37;
        assert_abs_diff_eq!(
            cogging_torque(theta, &p2),
            2.0 * cogging_torque(theta, &p1),
            epsilon = 1e-18
        );
    }

    #[test]
    fn dissipation_matches_friction_torque() {
        let p = ActuatorParams::default();
        for &w in &[-3.0, -1e-3, -1e-9, 0.0, 2e-4, 0.5, 10.0] {
            let direct = p.viscous_friction * w + p.coulomb_friction * smooth_sign(w);
            assert_abs_diff_eq!(dissipation_coefficient(w, &p) * w, direct, epsilon = 1e-15);
            assert!(dissipation_coefficient(w, &p) >= 0.0);
        }
    }

    #[test]
    fn current_loop_clamps_to_limit() {
        let p = ActuatorParams::default();
        let mut s = PlantState::at_rest();
        for _ in 0..2000 {
            s.current = current_loop(10.0, &s, &p, 1e-4);
        }
        assert_abs_diff_eq!(s.current, 6.0, epsilon = 1e-9);
    }

    #[test]
    fn current_loop_first_order_response() {
        let p = ActuatorParams::default();
        let mut s = PlantState::at_rest();
        for _ in 0..5 {
            s.current = current_loop(1.0, &s, &p, 1e-4);
        }
        assert_abs_diff_eq!(s.current, 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.current, 0.632, epsilon = 1e-3);
    }

    #[test]
    fn current_loop_idle_and_ideal() {
        let p = ActuatorParams::default();
        assert_eq!(current_loop(0.0, &PlantState::at_rest(), &p, 1e-4), 0.0);
        let ideal = ActuatorParams {
            current_loop_tau: 0.0,
            ..Default::default()
        };
        assert_eq!(current_loop(1.5, &PlantState::at_rest(), &ideal, 1e-4), 1.5);
    }

    #[test]
    fn one_millimetre_is_about_353_counts() {
        let p = ActuatorParams::default();
        assert_abs_diff_eq!(p.counts_per_mm(), 353.677, epsilon = 1e-3);
        assert_eq!(counts_from_tendon(1.0, &p), 354);
        assert_eq!(counts_from_tendon(0.0, &p), 0);
        assert_eq!(counts_from_tendon(-1.0, &p), -354);
    }

    #[test]
    fn encoder_floor_quantization() {
        let p = ActuatorParams::default();
        assert_eq!(p.quantize(0.44444), 353);
        assert_eq!(p.quantize(-1e-9), -1);
        assert_eq!(PlantState::at_angle(0.44444, &p).encoder_count, 353);
    }

    #[test]
    fn joint_view_of_one_millimetre() {
        let p = ActuatorParams::default();
        let theta = 1.0 / p.mm_per_motor_rad();
        let v = JointView::from_state(&PlantState::at_angle(theta, &p), &p);
        assert_abs_diff_eq!(v.tendon_length, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.joint_angle, theta / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn velocity_estimate_one_count_per_tick() {
        let mut sensor = Sensor::new(1e-3, VELOCITY_WINDOW);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = None;
        for k in 0..40 {
            let s = PlantState {
                encoder_count: k,
                ..PlantState::at_rest()
            };
            m = Some(sensor.sense(&s, 0.0, &mut rng));
        }
        assert_abs_diff_eq!(m.unwrap().velocity_estimate, 1000.0, epsilon = 1e-9);
    }

    #[test]
    fn noiseless_sensing_is_exact() {
        let mut sensor = Sensor::new(1e-3, VELOCITY_WINDOW);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = PlantState {
            current: 0.42,
            encoder_count: 17,
            ..PlantState::at_rest()
        };
        for _ in 0..20 {
            let m = sensor.sense(&s, 0.0, &mut rng);
            assert_eq!(m.sensed_current, 0.42);
            assert_eq!(m.encoder_count, 17);
            assert_eq!(m.velocity_estimate, 0.0);
        }
    }

    proptest! {
        #[test]
        fn tendon_roundtrip_within_half_count(x in -50.0f64..50.0) {
            let p = ActuatorParams::default();
            let back = tendon_from_counts(counts_from_tendon(x, &p), &p);
            prop_assert!((back - x).abs() <= 0.5 / p.counts_per_mm() + 1e-12);
        }

        #[test]
        fn counts_are_antisymmetric(x in 0.0f64..50.0) {
            let p = ActuatorParams::default();
            prop_assert_eq!(counts_from_tendon(-x, &p), -counts_from_tendon(x, &p));
        }

        #[test]
        fn encoder_is_monotone(a in -100.0f64..100.0, d in 0.0f64..1.0) {
            let p = ActuatorParams::default();
            prop_assert!(p.quantize(a) <= p.quantize(a + d));
        }

        #[test]
        fn tendon_length_is_monotone_in_theta(a in -100.0f64..100.0, d in 1e-9f64..1.0) {
            let p = ActuatorParams::default();
            let lo = JointView::from_state(&PlantState::at_angle(a, &p), &p);
            let hi = JointView::from_state(&PlantState::at_angle(a + d, &p), &p);
            prop_assert!(hi.tendon_length > lo.tendon_length);
        }
    }
}
