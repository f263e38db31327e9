//! Ziegler–Nichols ultimate-gain tuning by closed-loop P-control step tests.

use thiserror::Error;

use super::{ControllerKind, ControllerSpec, GainSet};
use crate::actuator::ActuatorParams;
use crate::loads::LoadModel;
use crate::sim::{run_scenario, NoiseConfig, SimConfig, SimError};
use crate::trajectory::ReferenceSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OscillationClass {
    Decaying,
    Sustained,
    Divergent,
}

/// One P-gain trial of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZnTrial {
    pub kp: f64,
    pub class: OscillationClass,
    /// Per-half-cycle amplitude ratio over the analysis window, if measured.
    pub decay_ratio: Option<f64>,
    /// Oscillation period, s, if measured.
    pub period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZnResult {
    /// Ku, A/mm
    pub ultimate_gain: f64,
    /// Tu, s
    pub ultimate_period: f64,
    pub p: GainSet,
    pub pd: GainSet,
    pub pid: GainSet,
    pub trials: Vec<ZnTrial>,
}

impl ZnResult {
    /// Classic table for an ultimate gain and period.
    pub fn from_ultimate(ku: f64, tu: f64) -> Self {
        let base = GainSet::zero();
        let p = GainSet { kp: 0.5 * ku, ..base.clone() };
        let pd_kp = 0.8 * ku;
        let pd = GainSet {
            kp: pd_kp,
            kd: pd_kp * tu / 8.0,
            ..base.clone()
        };
        let pid_kp = 0.6 * ku;
        let pid = GainSet {
            kp: pid_kp,
            ki: 2.0 * pid_kp / tu,
            kd: pid_kp * tu / 8.0,
            ..base
        };
        Self {
            ultimate_gain: ku,
            ultimate_period: tu,
            p,
            pd,
            pid,
            trials: Vec::new(),
        }
    }

    /// Controller spec for one row of the table. PDg is not part of it.
    pub fn spec(&self, kind: ControllerKind) -> Option<ControllerSpec> {
        let gains = match kind {
            ControllerKind::P => self.p.clone(),
            ControllerKind::Pd => self.pd.clone(),
            ControllerKind::Pid => self.pid.clone(),
            ControllerKind::Pdg => return None,
        };
        Some(ControllerSpec::new(kind, gains))
    }
}

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("step height must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("no sustained oscillation up to kp = {ceiling}")]
    NoOscillation { ceiling: f64 },
    #[error("response diverged at kp = {kp} before a sustained oscillation was bracketed")]
    Unstable { kp: f64 },
    #[error("simulation failed during tuning: {0}")]
    Sim(#[from] SimError),
}

/// Sweep and classification settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ZieglerNichols {
    pub start_gain: f64,
    pub growth: f64,
    pub ceiling: f64,
    /// Length of each trial, s.
    pub trial_duration: f64,
    /// Number of trailing half-cycle peaks used for classification.
    pub window: usize,
    /// Accepted band of the per-half-cycle amplitude ratio.
    pub sustained_band: (f64, f64),
    /// Half-cycles smaller than this fraction of the step are quantization chatter.
    pub min_amplitude_fraction: f64,
    /// Errors larger than this multiple of the step, or of the static offset
    /// when that is larger, count as divergence.
    pub divergence_factor: f64,
    pub max_bisections: usize,
    pub sim: SimConfig,
}

impl Default for ZieglerNichols {
    fn default() -> Self {
        Self {
            start_gain: 0.05,
            growth: 1.1,
            ceiling: 100.0,
            trial_duration: 3.0,
            window: 8,
            sustained_band: (0.9, 1.1),
            min_amplitude_fraction: 0.05,
            divergence_factor: 10.0,
            max_bisections: 30,
            sim: SimConfig {
                noise: NoiseConfig::none(),
                ..Default::default()
            },
        }
    }
}

/// Half-cycles of an error signal as (sample index of peak, peak |e|).
///
/// A half-cycle spans consecutive samples of one sign; zero samples are skipped.
fn half_cycles(errors: &[f64]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let mut sign = 0.0;
    let mut best = (0usize, 0.0f64);
    for (i, &e) in errors.iter().enumerate() {
        if e == 0.0 {
            continue;
        }
        let s = e.signum();
        if s != sign {
            if sign != 0.0 {
                out.push(best);
            }
            sign = s;
            best = (i, 0.0);
        }
        if e.abs() > best.1 {
            best = (i, e.abs());
        }
    }
    if sign != 0.0 {
        out.push(best);
    }
    out
}

impl ZieglerNichols {
    /// Classify a P-control step-error trace sampled every `dt` seconds.
    ///
    /// Returns the class with the decay ratio and period when enough peaks exist.
    pub fn classify(&self, errors: &[f64], dt: f64, step: f64) -> (OscillationClass, Option<f64>, Option<f64>) {
        if errors.iter().any(|e| !e.is_finite()) {
            return (OscillationClass::Divergent, None, None);
        }
        // a static load shifts the oscillation off zero, so work about the trailing mean
        let tail = &errors[errors.len() / 2..];
        let center = if tail.is_empty() { 0.0 } else { tail.iter().sum::<f64>() / tail.len() as f64 };
        let centered: Vec<f64> = errors.iter().map(|e| e - center).collect();
        let max_err = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        if max_err > self.divergence_factor * step.max(center.abs()) {
            return (OscillationClass::Divergent, None, None);
        }
        let mut cycles = half_cycles(&centered);
        // the first half-cycle is the rise, the last one is cut off by the run end
        if cycles.len() < 2 {
            return (OscillationClass::Decaying, None, None);
        }
        cycles.remove(0);
        cycles.pop();
        let floor = self.min_amplitude_fraction * step;
        let peaks: Vec<(usize, f64)> = cycles.into_iter().filter(|&(_, a)| a >= floor).collect();
        if peaks.len() < self.window || self.window < 2 {
            return (OscillationClass::Decaying, None, None);
        }
        let last = &peaks[peaks.len() - self.window..];
        let n = (self.window - 1) as f64;
        let ratio = (last[self.window - 1].1 / last[0].1).powf(1.0 / n);
        let spacing = (last[self.window - 1].0 - last[0].0) as f64 / n;
        let period = 2.0 * spacing * dt;
        let class = if ratio > self.sustained_band.1 {
            OscillationClass::Divergent
        } else if ratio < self.sustained_band.0 {
            OscillationClass::Decaying
        } else {
            OscillationClass::Sustained
        };
        (class, Some(ratio), Some(period))
    }

    fn trial(
        &self,
        kp: f64,
        plant: &ActuatorParams,
        load: &LoadModel,
        step_mm: f64,
    ) -> Result<ZnTrial, TuneError> {
        let spec = ControllerSpec::new(
            ControllerKind::P,
            GainSet { kp, ..GainSet::zero() },
        );
        let cfg = SimConfig {
            duration: self.trial_duration,
            ..self.sim.clone()
        };
        let reference = ReferenceSignal::Step { height: step_mm, at: 0.0 };
        let (class, decay_ratio, period) = match run_scenario(&cfg, plant, load, &spec, &reference) {
            Ok(rec) => {
                let errors: Vec<f64> = rec.rows.iter().map(|r| r.position_mm - r.setpoint_mm).collect();
                self.classify(&errors, cfg.dt_high(), step_mm)
            }
            Err(SimError::NonFinite { .. }) => (OscillationClass::Divergent, None, None),
            Err(e) => return Err(e.into()),
        };
        Ok(ZnTrial {
            kp,
            class,
            decay_ratio,
            period,
        })
    }

    /// Sweep kp geometrically until a sustained oscillation is found.
    ///
    /// If the sweep jumps from decaying straight to divergent, the bracket is
    /// bisected geometrically.
    pub fn tune(
        &self,
        plant: &ActuatorParams,
        load: &LoadModel,
        step_mm: f64,
    ) -> Result<ZnResult, TuneError> {
        if !(step_mm.is_finite() && step_mm > 0.0) {
            return Err(TuneError::InvalidStep(step_mm));
        }
        let mut trials = Vec::new();
        let finish = |t: &ZnTrial, trials: Vec<ZnTrial>| {
            let mut r = ZnResult::from_ultimate(t.kp, t.period.unwrap_or(f64::NAN));
            r.trials = trials;
            r
        };

        let mut kp = self.start_gain;
        let mut last_decaying: Option<f64> = None;
        while kp <= self.ceiling {
            let t = self.trial(kp, plant, load, step_mm)?;
            trials.push(t);
            match t.class {
                OscillationClass::Sustained => return Ok(finish(&t, trials)),
                OscillationClass::Decaying => last_decaying = Some(kp),
                OscillationClass::Divergent => {
                    let Some(mut lo) = last_decaying else {
                        return Err(TuneError::Unstable { kp });
                    };
                    let mut hi = kp;
                    for _ in 0..self.max_bisections {
                        let mid = (lo * hi).sqrt();
                        let t = self.trial(mid, plant, load, step_mm)?;
                        trials.push(t);
                        match t.class {
                            OscillationClass::Sustained => return Ok(finish(&t, trials)),
                            OscillationClass::Divergent => hi = mid,
                            OscillationClass::Decaying => lo = mid,
                        }
                    }
                    return Err(TuneError::Unstable { kp: hi });
                }
            }
            kp *= self.growth;
        }
        Err(TuneError::NoOscillation {
            ceiling: self.ceiling,
        })
    }
}

/// Classify an error trace with the default settings.
pub fn classify_response(errors: &[f64], dt: f64, step: f64) -> OscillationClass {
    ZieglerNichols::default().classify(errors, dt, step).0
}

/// Tune with the default sweep: P-control step tests starting at kp = 0.05 A/mm.
pub fn ziegler_nichols_tune(
    plant: &ActuatorParams,
    load: &LoadModel,
    step_mm: f64,
) -> Result<ZnResult, TuneError> {
    ZieglerNichols::default().tune(plant, load, step_mm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    fn oscillation(growth_per_half_cycle: f64, period: f64, n: usize, dt: f64) -> Vec<f64> {
        // e(t) = -A(t) cos(2πt/T), with the amplitude scaled per half period
        let lambda = growth_per_half_cycle.ln() / (period / 2.0);
        (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                -(lambda * t).exp() * (TAU * t / period).cos()
            })
            .collect()
    }

    #[test]
    fn table_identities() {
        let r = ZnResult::from_ultimate(0.45, 0.134);
        assert_eq!(r.p.kp, 0.5 * 0.45);
        assert_eq!(r.pd.kp, 0.8 * 0.45);
        assert_eq!(r.pd.kd, r.pd.kp * 0.134 / 8.0);
        assert_eq!(r.pid.kp, 0.6 * 0.45);
        assert_eq!(r.pid.ki, 2.0 * r.pid.kp / 0.134);
        assert_eq!(r.pid.kd, r.pid.kp * 0.134 / 8.0);
        assert!(r.spec(ControllerKind::Pdg).is_none());
    }

    #[test]
    fn classifies_synthetic_traces() {
        let zn = ZieglerNichols::default();
        let dt = 1e-3;
        let (c, ratio, period) = zn.classify(&oscillation(1.0, 0.2, 3000, dt), dt, 1.0);
        assert_eq!(c, OscillationClass::Sustained);
        assert_relative_eq!(ratio.unwrap(), 1.0, epsilon = 1e-3);
        assert_relative_eq!(period.unwrap(), 0.2, epsilon = 2e-3);

        let (c, ..) = zn.classify(&oscillation(0.8, 0.2, 1000, dt), dt, 1.0);
        assert_eq!(c, OscillationClass::Decaying);

        let (c, ..) = zn.classify(&oscillation(1.15, 0.2, 1500, dt), dt, 1.0);
        assert_eq!(c, OscillationClass::Divergent);

        assert_eq!(classify_response(&[0.0; 100], dt, 1.0), OscillationClass::Decaying);
        assert_eq!(classify_response(&[f64::NAN], dt, 1.0), OscillationClass::Divergent);
    }

    #[test]
    fn chatter_below_floor_is_ignored() {
        let e: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        assert_eq!(classify_response(&e, 1e-3, 1.0), OscillationClass::Decaying);
    }

    #[test]
    fn rejects_bad_step() {
        let p = ActuatorParams::default();
        assert!(matches!(
            ziegler_nichols_tune(&p, &LoadModel::Null, 0.0),
            Err(TuneError::InvalidStep(_))
        ));
    }
}
