//! Tendon-length references: steps, staircases and C⁴-smooth rest-to-rest moves.
//!
//! Piecewise references are left-continuous: a step scheduled at `at` still
//! reports the old value at exactly `t = at`.

use serde::{Deserialize, Serialize};

use crate::error::{finite, positive, ParamError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceSignal {
    /// Jump from 0 to `height` mm after time `at`.
    Step { height: f64, at: f64 },
    /// Hold each level (mm) for `dwell` seconds, then keep the last one.
    Staircase { levels: Vec<f64>, dwell: f64 },
    /// Rest-to-rest move from `start` to `end` mm over `duration` s beginning at `t0`.
    Smooth {
        start: f64,
        end: f64,
        t0: f64,
        duration: f64,
    },
    /// Sequence of references; the latest one that has started is active.
    Composite { parts: Vec<ReferenceSignal> },
}

/// Ninth-order rest-to-rest polynomial on the real line (not clamped).
///
/// `s(τ) = 126τ⁵ − 420τ⁶ + 540τ⁷ − 315τ⁸ + 70τ⁹`, with derivatives one to four
/// vanishing at τ = 0 and τ = 1.
pub fn rest_to_rest(tau: f64) -> f64 {
    let t5 = tau.powi(5);
    t5 * (126.0 + tau * (-420.0 + tau * (540.0 + tau * (-315.0 + tau * 70.0))))
}

/// `s'(τ) = 630 τ⁴ (1 − τ)⁴`, not clamped.
pub fn rest_to_rest_rate(tau: f64) -> f64 {
    630.0 * (tau * (1.0 - tau)).powi(4)
}

/// Normalised smooth-step position on [0, 1], clamped outside.
pub fn smooth_step(tau: f64) -> f64 {
    if tau <= 0.0 {
        0.0
    } else if tau >= 1.0 {
        1.0
    } else if tau <= 0.5 {
        rest_to_rest(tau)
    } else {
        // mirrored form keeps precision near τ = 1
        1.0 - rest_to_rest(1.0 - tau)
    }
}

/// Normalised smooth-step velocity, zero outside (0, 1).
pub fn smooth_step_rate(tau: f64) -> f64 {
    if tau <= 0.0 || tau >= 1.0 {
        0.0
    } else {
        rest_to_rest_rate(tau)
    }
}

impl ReferenceSignal {
    pub fn hold(position: f64) -> Self {
        ReferenceSignal::Step {
            height: position,
            at: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        match self {
            ReferenceSignal::Step { height, at } => {
                finite("reference.height", *height)?;
                finite("reference.at", *at)?;
            }
            ReferenceSignal::Staircase { levels, dwell } => {
                positive("reference.dwell", *dwell)?;
                if levels.is_empty() {
                    return Err(ParamError::Invalid("reference.levels is empty".into()));
                }
                for &l in levels {
                    finite("reference.levels", l)?;
                }
            }
            ReferenceSignal::Smooth {
                start,
                end,
                t0,
                duration,
            } => {
                finite("reference.start", *start)?;
                finite("reference.end", *end)?;
                finite("reference.t0", *t0)?;
                positive("reference.duration", *duration)?;
            }
            ReferenceSignal::Composite { parts } => {
                if parts.is_empty() {
                    return Err(ParamError::Invalid("reference.parts is empty".into()));
                }
                for p in parts {
                    p.validate()?;
                }
                if parts
                    .windows(2)
                    .any(|w| w[1].start_time() < w[0].start_time())
                {
                    return Err(ParamError::Invalid(
                        "reference.parts must be ordered by start time".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Time at which this reference starts to act.
    pub fn start_time(&self) -> f64 {
        match self {
            ReferenceSignal::Step { at, .. } => *at,
            ReferenceSignal::Staircase { .. } => 0.0,
            ReferenceSignal::Smooth { t0, .. } => *t0,
            ReferenceSignal::Composite { parts } => {
                parts.first().map_or(0.0, ReferenceSignal::start_time)
            }
        }
    }

    /// Setpoint position (mm) and velocity (mm/s) at time `t`.
    pub fn evaluate(&self, t: f64) -> (f64, f64) {
        match self {
            ReferenceSignal::Step { height, at } => {
                if t > *at {
                    (*height, 0.0)
                } else {
                    (0.0, 0.0)
                }
            }
            ReferenceSignal::Staircase { levels, dwell } => {
                let idx = if t <= 0.0 {
                    0
                } else {
                    ((t / dwell).ceil() as usize).saturating_sub(1)
                };
                (levels[idx.min(levels.len() - 1)], 0.0)
            }
            ReferenceSignal::Smooth {
                start,
                end,
                t0,
                duration,
            } => {
                let tau = (t - t0) / duration;
                let span = end - start;
                (
                    start + span * smooth_step(tau),
                    span * smooth_step_rate(tau) / duration,
                )
            }
            ReferenceSignal::Composite { parts } => {
                let active = parts
                    .iter()
                    .rev()
                    .find(|p| p.start_time() < t)
                    .or_else(|| parts.first());
                active.map_or((0.0, 0.0), |p| p.evaluate(t))
            }
        }
    }

    /// Chain of smooth moves through `waypoints`, `leg` seconds each.
    pub fn smooth_path(waypoints: &[f64], leg: f64, t0: f64) -> Self {
        let parts = waypoints
            .windows(2)
            .enumerate()
            .map(|(i, w)| ReferenceSignal::Smooth {
                start: w[0],
                end: w[1],
                t0: t0 + i as f64 * leg,
                duration: leg,
            })
            .collect();
        ReferenceSignal::Composite { parts }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_move() -> ReferenceSignal {
        ReferenceSignal::Smooth {
            start: 0.0,
            end: 1.0,
            t0: 0.0,
            duration: 1.0,
        }
    }

    #[test]
    fn boundary_conditions() {
        assert_eq!(unit_move().evaluate(0.0), (0.0, 0.0));
        assert_eq!(unit_move().evaluate(1.0), (1.0, 0.0));
        assert_eq!(unit_move().evaluate(0.5).0, 0.5);
    }

    #[test]
    fn peak_rate() {
        assert_eq!(smooth_step_rate(0.5), 315.0 / 128.0);
        assert_eq!(smooth_step_rate(0.5), 2.4609375);
    }

    #[test]
    fn rate_is_derivative_of_position() {
        let h = 1e-6;
        for i in 1..100 {
            let tau = i as f64 / 100.0;
            let fd = (smooth_step(tau + h) - smooth_step(tau - h)) / (2.0 * h);
            assert_abs_diff_eq!(fd, smooth_step_rate(tau), epsilon = 1e-7);
        }
    }

    #[test]
    fn mirrored_form_matches_polynomial() {
        for i in 0..=200 {
            let tau = i as f64 / 200.0;
            assert_abs_diff_eq!(smooth_step(tau), rest_to_rest(tau), epsilon = 1e-11);
            assert_abs_diff_eq!(smooth_step(tau) + smooth_step(1.0 - tau), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn rate_integrates_to_one() {
        let n = 100_000;
        let h = 1.0 / n as f64;
        let sum: f64 = (0..n)
            .map(|i| 0.5 * (smooth_step_rate(i as f64 * h) + smooth_step_rate((i + 1) as f64 * h)) * h)
            .sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn scaled_move_velocity() {
        let r = ReferenceSignal::Smooth {
            start: 2.0,
            end: -6.0,
            t0: 1.0,
            duration: 4.0,
        };
        let (p, v) = r.evaluate(3.0);
        assert_eq!(p, -2.0);
        assert_eq!(v, -8.0 * 2.4609375 / 4.0);
        assert_eq!(r.evaluate(0.0), (2.0, 0.0));
        assert_eq!(r.evaluate(9.0), (-6.0, 0.0));
    }

    #[test]
    fn step_is_left_continuous() {
        let s = ReferenceSignal::Step { height: 1.0, at: 0.5 };
        assert_eq!(s.evaluate(0.5).0, 0.0);
        assert_eq!(s.evaluate(0.5001).0, 1.0);
    }

    #[test]
    fn staircase_levels() {
        let s = ReferenceSignal::Staircase {
            levels: vec![1.0, -1.0, 2.0],
            dwell: 2.0,
        };
        assert_eq!(s.evaluate(0.0).0, 1.0);
        assert_eq!(s.evaluate(2.0).0, 1.0);
        assert_eq!(s.evaluate(2.5).0, -1.0);
        assert_eq!(s.evaluate(5.0).0, 2.0);
        assert_eq!(s.evaluate(100.0).0, 2.0);
    }

    #[test]
    fn composite_path() {
        let r = ReferenceSignal::smooth_path(&[0.0, 7.0, -8.0, 0.0], 2.0, 0.0);
        r.validate().unwrap();
        assert_eq!(r.evaluate(0.0), (0.0, 0.0));
        assert_eq!(r.evaluate(1.0).0, 3.5);
        assert_eq!(r.evaluate(2.0).0, 7.0);
        assert_eq!(r.evaluate(3.0).0, -0.5);
        assert_eq!(r.evaluate(6.0).0, 0.0);
        assert_eq!(r.evaluate(50.0), (0.0, 0.0));
    }

    #[test]
    fn validation() {
        let bad = ReferenceSignal::Smooth {
            start: 0.0,
            end: 1.0,
            t0: 0.0,
            duration: 0.0,
        };
        assert!(bad.validate().is_err());
        let bad = ReferenceSignal::Staircase {
            levels: vec![1.0],
            dwell: -1.0,
        };
        assert!(bad.validate().is_err());
        let unordered = ReferenceSignal::Composite {
            parts: vec![ReferenceSignal::hold(1.0), ReferenceSignal::Step { height: 0.0, at: -1.0 }],
        };
        assert!(unordered.validate().is_err());
    }

    proptest! {
        #[test]
        fn strictly_increasing_inside(a in 1e-3f64..0.998, d in 1e-3f64..1e-2) {
            let b = (a + d).min(0.999);
            prop_assert!(smooth_step(b) > smooth_step(a));
        }

        #[test]
        fn composite_defined_everywhere(t in 0.0f64..10.0) {
            let r = ReferenceSignal::smooth_path(&[0.0, 7.0, -8.0, 0.0], 2.0, 0.0);
            let (p, v) = r.evaluate(t);
            prop_assert!(p.is_finite() && v.is_finite());
            prop_assert!((-8.0..=7.0).contains(&p));
        }
    }
}
