//! External loads acting on the module output.
//!
//! Tendon loads (hanging weight, flexible beam) produce a tension that opposes
//! pulling; torque pulses act on the joint directly.

use serde::{Deserialize, Serialize};

use crate::actuator::{ActuatorParams, JointView};
use crate::error::{finite, non_negative, positive, ParamError};
use crate::GRAVITY;

/// One rectangular torque pulse applied to the joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    /// s
    pub start: f64,
    /// s
    pub duration: f64,
    /// Joint torque, N·m.
    pub torque: f64,
}

impl Pulse {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start && t < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LoadModel {
    #[default]
    Null,
    /// Weight hanging on the tendon, kg.
    Gravity { mass: f64 },
    /// Planar flexible beam bent at constant curvature by the tendon.
    Beam {
        /// Flexural rigidity, N·m².
        ei: f64,
        /// Tendon routing offset from the neutral axis, m.
        offset: f64,
        /// Beam length, m.
        length: f64,
    },
    /// Joint torque pulses, sorted by start time.
    Pulses { schedule: Vec<Pulse> },
}

impl LoadModel {
    /// 285 mm beam used for the bending experiments: EI = 0.01 N·m², 20 mm offset.
    pub fn flexible_beam() -> Self {
        LoadModel::Beam {
            ei: 0.01,
            offset: 0.02,
            length: 0.285,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        match self {
            LoadModel::Null => {}
            LoadModel::Gravity { mass } => {
                non_negative("load.mass", *mass)?;
            }
            LoadModel::Beam { ei, offset, length } => {
                positive("load.ei", *ei)?;
                positive("load.offset", *offset)?;
                positive("load.length", *length)?;
            }
            LoadModel::Pulses { schedule } => {
                for p in schedule {
                    finite("load.schedule.start", p.start)?;
                    positive("load.schedule.duration", p.duration)?;
                    finite("load.schedule.torque", p.torque)?;
                }
                if schedule.windows(2).any(|w| w[1].start < w[0].start) {
                    return Err(ParamError::Invalid(
                        "load.schedule must be sorted by start time".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Whether the load acts through the tendon (as opposed to the joint).
    pub fn is_tendon_load(&self) -> bool {
        matches!(self, LoadModel::Gravity { .. } | LoadModel::Beam { .. })
    }

    /// Beam spring constant `EI / (d² L)`, N/m. `None` for other loads.
    pub fn beam_stiffness(&self) -> Option<f64> {
        match self {
            LoadModel::Beam { ei, offset, length } => Some(ei / (offset * offset * length)),
            _ => None,
        }
    }

    /// Tendon tension in N. For `Pulses` this is the summed joint torque in N·m.
    pub fn tension(&self, joint: &JointView, t: f64) -> f64 {
        match self {
            LoadModel::Null => 0.0,
            LoadModel::Gravity { mass } => mass * GRAVITY,
            LoadModel::Beam { .. } => {
                // slack tendons carry nothing
                let pulled_m = joint.tendon_length.max(0.0) / 1000.0;
                self.beam_stiffness().unwrap_or(0.0) * pulled_m
            }
            LoadModel::Pulses { schedule } => schedule
                .iter()
                .filter(|p| p.is_active(t))
                .map(|p| p.torque)
                .sum(),
        }
    }

    /// Torque on the joint, N·m. Tendon tension opposes pulling.
    pub fn joint_torque(&self, joint: &JointView, t: f64, params: &ActuatorParams) -> f64 {
        match self {
            LoadModel::Pulses { .. } => self.tension(joint, t),
            _ => -self.tension(joint, t) * params.drum_radius,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn view(mm: f64) -> JointView {
        JointView {
            joint_angle: 0.0,
            joint_velocity: 0.0,
            tendon_length: mm,
            tendon_velocity: 0.0,
        }
    }

    fn default_beam() -> LoadModel {
        LoadModel::Beam {
            ei: 0.01,
            offset: 0.02,
            length: 0.285,
        }
    }

    #[test]
    fn gravity_is_displacement_invariant() {
        let g = LoadModel::Gravity { mass: 1.0 };
        assert_abs_diff_eq!(g.tension(&view(3.7), 0.0), 9.81, epsilon = 1e-12);
        assert_eq!(g.tension(&view(0.0), 0.0), g.tension(&view(10.0), 0.0));
    }

    #[test]
    fn beam_hand_evaluated() {
        let b = default_beam();
        assert_abs_diff_eq!(b.beam_stiffness().unwrap(), 87.719_298, epsilon = 1e-5);
        assert_abs_diff_eq!(b.tension(&view(5.0), 0.0), 0.438_596, epsilon = 1e-5);
        assert_eq!(b.tension(&view(0.0), 0.0), 0.0);
        assert_eq!(b.tension(&view(-4.0), 0.0), 0.0);
    }

    #[test]
    fn tension_to_torque() {
        let p = ActuatorParams::default();
        let g = LoadModel::Gravity { mass: 1.0 };
        assert_abs_diff_eq!(g.joint_torque(&view(0.0), 0.0, &p), -0.08829, epsilon = 1e-12);
        assert_eq!(LoadModel::Null.joint_torque(&view(5.0), 0.0, &p), 0.0);
    }

    #[test]
    fn pulse_schedule_lookup() {
        let p = ActuatorParams::default();
        let l = LoadModel::Pulses {
            schedule: vec![Pulse {
                start: 1.0,
                duration: 0.1,
                torque: 0.01,
            }],
        };
        assert_eq!(l.joint_torque(&view(0.0), 1.05, &p), 0.01);
        assert_eq!(l.joint_torque(&view(0.0), 1.2, &p), 0.0);
        assert_eq!(l.joint_torque(&view(0.0), 0.99, &p), 0.0);
    }

    #[test]
    fn validation() {
        assert!(LoadModel::Gravity { mass: -0.1 }.validate().is_err());
        assert!(LoadModel::Beam {
            ei: 0.0,
            offset: 0.02,
            length: 0.285
        }
        .validate()
        .is_err());
        let unsorted = LoadModel::Pulses {
            schedule: vec![
                Pulse {
                    start: 2.0,
                    duration: 0.1,
                    torque: 0.0,
                },
                Pulse {
                    start: 1.0,
                    duration: 0.1,
                    torque: 0.0,
                },
            ],
        };
        assert!(unsorted.validate().is_err());
        assert!(default_beam().validate().is_ok());
    }

    #[test]
    fn beam_pull_release_cycle_is_lossless() {
        // trapezoid integral of tension along 0 -> 12 mm -> 0
        let b = default_beam();
        let n = 12_000;
        let path: Vec<f64> = (0..=n)
            .map(|i| i as f64 * 12.0 / n as f64)
            .chain((0..=n).rev().map(|i| i as f64 * 12.0 / n as f64))
            .collect();
        let work: f64 = path
            .windows(2)
            .map(|w| 0.5 * (b.tension(&view(w[0]), 0.0) + b.tension(&view(w[1]), 0.0)) * (w[1] - w[0]))
            .sum();
        assert_abs_diff_eq!(work, 0.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn beam_tension_strictly_increasing(a in 1e-3f64..40.0, d in 1e-3f64..10.0) {
            let b = default_beam();
            prop_assert!(b.tension(&view(a + d), 0.0) > b.tension(&view(a), 0.0));
        }
    }
}
