//! Position controllers running at the high-level rate.
//!
//! Errors are in tendon millimetres, outputs are current commands in amperes.

mod tuning;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuator::{tendon_from_counts, ActuatorParams, Measurement};
use crate::error::{non_negative, positive, unit_interval, ParamError};
use crate::GRAVITY;

pub use tuning::{
    classify_response, ziegler_nichols_tune, OscillationClass, TuneError, ZieglerNichols,
    ZnResult, ZnTrial,
};

/// Position-controller gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainSet {
    /// A/mm
    pub kp: f64,
    /// A/(mm·s)
    pub ki: f64,
    /// A·s/mm
    pub kd: f64,
    /// Constant current offset compensating a known load, A.
    pub feedforward_current: Option<f64>,
    /// First-order filter on the error rate; 0 disables filtering.
    pub derivative_filter_alpha: f64,
}

impl Default for GainSet {
    fn default() -> Self {
        Self {
            kp: 1.6,
            ki: 0.0,
            kd: 0.02,
            feedforward_current: None,
            derivative_filter_alpha: 0.5,
        }
    }
}

impl GainSet {
    pub fn zero() -> Self {
        Self {
            kp: 0.0,
            ki: 0.0,
            kd: 0.0,
            feedforward_current: None,
            derivative_filter_alpha: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        non_negative("controller.gains.kp", self.kp)?;
        non_negative("controller.gains.ki", self.ki)?;
        non_negative("controller.gains.kd", self.kd)?;
        unit_interval(
            "controller.gains.derivative_filter_alpha",
            self.derivative_filter_alpha,
        )?;
        if let Some(ff) = self.feedforward_current {
            crate::error::finite("controller.gains.feedforward_current", ff)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    P,
    Pd,
    Pid,
    /// PD with constant load feedforward.
    Pdg,
}

impl ControllerKind {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerKind::P => "p",
            ControllerKind::Pd => "pd",
            ControllerKind::Pid => "pid",
            ControllerKind::Pdg => "pdg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    pub gains: GainSet,
    /// Bound on the magnitude of the integral term, A.
    pub integrator_limit: f64,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        Self {
            kind: ControllerKind::Pd,
            gains: GainSet::default(),
            integrator_limit: 6.0,
        }
    }
}

impl ControllerSpec {
    pub fn new(kind: ControllerKind, gains: GainSet) -> Self {
        Self {
            kind,
            gains,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.gains.validate()?;
        non_negative("controller.integrator_limit", self.integrator_limit)?;
        if self.kind == ControllerKind::Pdg && self.gains.feedforward_current.is_none() {
            return Err(ParamError::Invalid(
                "controller kind pdg requires gains.feedforward_current".into(),
            ));
        }
        if self.kind == ControllerKind::Pid && self.gains.ki > 0.0 {
            positive("controller.integrator_limit", self.integrator_limit)?;
        }
        Ok(())
    }
}

/// Result of one controller update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// Current command after clamping, A.
    pub command: f64,
    /// Whether the unclamped command exceeded the current limit.
    pub saturated: bool,
    pub error_mm: f64,
    /// Integral term, A.
    pub integral_term: f64,
}

/// Controller with its memory; owned by one scenario run.
#[derive(Debug, Clone)]
pub struct Controller {
    spec: ControllerSpec,
    current_limit: f64,
    params: ActuatorParams,
    integral: f64,
    filtered_rate: f64,
    prev_position: Option<f64>,
}

impl Controller {
    pub fn new(spec: ControllerSpec, params: &ActuatorParams) -> Self {
        Self {
            spec,
            current_limit: params.current_limit,
            params: params.clone(),
            integral: 0.0,
            filtered_rate: 0.0,
            prev_position: None,
        }
    }

    pub fn spec(&self) -> &ControllerSpec {
        &self.spec
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.filtered_rate = 0.0;
        self.prev_position = None;
    }

    /// One position-loop update.
    ///
    /// The measured tendon position comes from the encoder count. The error
    /// rate is the setpoint velocity minus the backward difference of measured
    /// positions, low-pass filtered with `derivative_filter_alpha`.
    pub fn step(
        &mut self,
        setpoint_mm: f64,
        setpoint_velocity_mm_s: f64,
        measurement: &Measurement,
        dt: f64,
    ) -> ControlOutput {
        let g = &self.spec.gains;
        let position = tendon_from_counts(measurement.encoder_count, &self.params);
        let error = setpoint_mm - position;

        let velocity = match self.prev_position {
            Some(prev) if dt > 0.0 => (position - prev) / dt,
            _ => 0.0,
        };
        self.prev_position = Some(position);
        let alpha = g.derivative_filter_alpha;
        self.filtered_rate =
            alpha * self.filtered_rate + (1.0 - alpha) * (setpoint_velocity_mm_s - velocity);

        let mut u = g.kp * error;
        if matches!(
            self.spec.kind,
            ControllerKind::Pd | ControllerKind::Pid | ControllerKind::Pdg
        ) {
            u += g.kd * self.filtered_rate;
        }
        let mut integral_term = 0.0;
        if self.spec.kind == ControllerKind::Pid && g.ki > 0.0 {
            let bound = self.spec.integrator_limit / g.ki;
            self.integral = (self.integral + error * dt).clamp(-bound, bound);
            integral_term = (g.ki * self.integral)
                .clamp(-self.spec.integrator_limit, self.spec.integrator_limit);
            u += integral_term;
        }
        if self.spec.kind == ControllerKind::Pdg {
            u += g.feedforward_current.unwrap_or(0.0);
        }

        let limit = self.current_limit;
        ControlOutput {
            command: u.clamp(-limit, limit),
            saturated: u.abs() > limit,
            error_mm: error,
            integral_term,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("proportional gain must be positive, got {0}")]
    ZeroProportionalGain(f64),
    #[error("steady-state prediction assumes no integral action (ki = {0})")]
    IntegralAction(f64),
}

/// Current that holds a hanging mass at rest, A.
pub fn gravity_feedforward(mass: f64, params: &ActuatorParams) -> f64 {
    params.holding_current(mass * GRAVITY)
}

/// Closed-form PD steady-state error under a hanging mass, mm.
pub fn steady_state_error_pd(
    mass: f64,
    gains: &GainSet,
    params: &ActuatorParams,
) -> Result<f64, ControlError> {
    if gains.kp <= 0.0 {
        return Err(ControlError::ZeroProportionalGain(gains.kp));
    }
    if gains.ki != 0.0 {
        return Err(ControlError::IntegralAction(gains.ki));
    }
    Ok(gravity_feedforward(mass, params) / gains.kp)
}
