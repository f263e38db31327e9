//! Load estimation from sensed current and disturbance detection from the
//! encoder velocity estimate.

use serde::{Deserialize, Serialize};

use crate::actuator::ActuatorParams;
use crate::error::{non_negative, positive, unit_interval, ParamError};
use crate::experiments::record::RunRecord;
use crate::loads::Pulse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// counts/s
    pub velocity_threshold: f64,
    /// Samples above threshold needed to open an event.
    pub min_consecutive: usize,
    /// A, on |sensed − baseline|
    pub current_threshold: f64,
    /// Averaging window for load estimation, samples.
    pub window: usize,
    /// Length of the leading stretch whose median current is the baseline, s.
    pub baseline_duration: f64,
    /// Close threshold as a fraction of the open threshold.
    pub hysteresis: f64,
    /// Events of one channel separated by less than this are merged, s.
    pub merge_gap: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            velocity_threshold: 250.0,
            min_consecutive: 5,
            current_threshold: 0.15,
            window: 16,
            baseline_duration: 0.5,
            hysteresis: 0.5,
            merge_gap: 0.25,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        positive("detector.velocity_threshold", self.velocity_threshold)?;
        positive("detector.current_threshold", self.current_threshold)?;
        positive("detector.min_consecutive", self.min_consecutive as f64)?;
        positive("detector.window", self.window as f64)?;
        positive("detector.baseline_duration", self.baseline_duration)?;
        unit_interval("detector.hysteresis", self.hysteresis)?;
        non_negative("detector.merge_gap", self.merge_gap)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    Velocity,
    Current,
}

impl Channel {
    pub fn name(&self) -> &'static str {
        match self {
            Channel::Velocity => "velocity",
            Channel::Current => "current",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEvent {
    pub t_start: f64,
    pub t_end: f64,
    /// Peak |signal| inside the event: counts/s or A.
    pub peak: f64,
    pub channel: Channel,
}

impl DetectionEvent {
    pub fn overlaps(&self, start: f64, end: f64) -> bool {
        self.t_start <= end && self.t_end >= start
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadEstimate {
    /// N
    pub tension: f64,
    /// False while the module is moving; the static torque balance does not hold then.
    pub reliable: bool,
}

/// Tendon tension balanced by the mean sensed current.
pub fn estimate_load(
    mean_sensed_current: f64,
    velocity_estimate: f64,
    cfg: &DetectorConfig,
    params: &ActuatorParams,
) -> LoadEstimate {
    LoadEstimate {
        tension: params.tension_from_current(mean_sensed_current),
        reliable: velocity_estimate.abs() < cfg.velocity_threshold,
    }
}

/// Load estimate from the last `cfg.window` rows of a record.
pub fn estimate_load_from_record(
    record: &RunRecord,
    cfg: &DetectorConfig,
    params: &ActuatorParams,
) -> Option<LoadEstimate> {
    let n = cfg.window.min(record.rows.len());
    if n == 0 {
        return None;
    }
    let tail = &record.rows[record.rows.len() - n..];
    let current = tail.iter().map(|r| r.sensed_current_a).sum::<f64>() / n as f64;
    let velocity = tail.iter().map(|r| r.velocity_counts_s).sum::<f64>() / n as f64;
    Some(estimate_load(current, velocity, cfg, params))
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Threshold detector with a consecutive-sample requirement and hysteresis.
fn detect_channel(
    times: &[f64],
    signal: &[f64],
    open: f64,
    cfg: &DetectorConfig,
    channel: Channel,
) -> Vec<DetectionEvent> {
    let close = cfg.hysteresis * open;
    let mut events: Vec<DetectionEvent> = Vec::new();
    let mut run = 0usize;
    let mut active: Option<DetectionEvent> = None;
    for (i, (&t, &x)) in times.iter().zip(signal).enumerate() {
        let mag = x.abs();
        if let Some(ev) = active.as_mut() {
            if mag < close {
                events.push(*ev);
                active = None;
                run = 0;
            } else {
                ev.t_end = t;
                ev.peak = ev.peak.max(mag);
            }
            continue;
        }
        if mag > open {
            run += 1;
            if run >= cfg.min_consecutive {
                let first = i + 1 - run;
                let peak = signal[first..=i].iter().fold(0.0f64, |m, v| m.max(v.abs()));
                active = Some(DetectionEvent {
                    t_start: times[first],
                    t_end: t,
                    peak,
                    channel,
                });
            }
        } else {
            run = 0;
        }
    }
    events.extend(active);

    let mut merged: Vec<DetectionEvent> = Vec::with_capacity(events.len());
    for ev in events {
        match merged.last_mut() {
            Some(last) if ev.t_start - last.t_end < cfg.merge_gap => {
                last.t_end = ev.t_end;
                last.peak = last.peak.max(ev.peak);
            }
            _ => merged.push(ev),
        }
    }
    merged
}

/// Disturbance events on both channels, velocity first, each in time order.
///
/// The current channel compares the sensed current against the median of the
/// first `baseline_duration` seconds, which removes any holding current.
pub fn detect_disturbances(record: &RunRecord, cfg: &DetectorConfig) -> Vec<DetectionEvent> {
    let rows = &record.rows;
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();

    let velocity: Vec<f64> = rows.iter().map(|r| r.velocity_counts_s).collect();
    let mut events = detect_channel(&times, &velocity, cfg.velocity_threshold, cfg, Channel::Velocity);

    let baseline = median(
        rows.iter()
            .filter(|r| r.t < first.t + cfg.baseline_duration)
            .map(|r| r.sensed_current_a)
            .collect(),
    );
    let deviation: Vec<f64> = rows.iter().map(|r| r.sensed_current_a - baseline).collect();
    events.extend(detect_channel(&times, &deviation, cfg.current_threshold, cfg, Channel::Current));
    events
}

/// Precision and recall of one channel against a ground-truth pulse schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScore {
    pub events: usize,
    pub true_events: usize,
    pub pulses: usize,
    pub detected_pulses: usize,
}

impl DetectionScore {
    /// Fraction of events that overlap a pulse; 1 when there are no events.
    pub fn precision(&self) -> f64 {
        if self.events == 0 {
            1.0
        } else {
            self.true_events as f64 / self.events as f64
        }
    }

    /// Fraction of pulses overlapped by an event; 1 when there are no pulses.
    pub fn recall(&self) -> f64 {
        if self.pulses == 0 {
            1.0
        } else {
            self.detected_pulses as f64 / self.pulses as f64
        }
    }
}

/// Score events of `channel` against `pulses`.
///
/// A pulse window is extended by `tolerance` seconds after its end to allow
/// for the response decaying after the torque is removed.
pub fn score_detections(
    events: &[DetectionEvent],
    pulses: &[Pulse],
    channel: Channel,
    tolerance: f64,
) -> DetectionScore {
    let events: Vec<&DetectionEvent> = events.iter().filter(|e| e.channel == channel).collect();
    let hit = |e: &DetectionEvent, p: &Pulse| e.overlaps(p.start, p.end() + tolerance);
    DetectionScore {
        events: events.len(),
        true_events: events.iter().filter(|e| pulses.iter().any(|p| hit(e, p))).count(),
        pulses: pulses.len(),
        detected_pulses: pulses.iter().filter(|p| events.iter().any(|e| hit(e, p))).count(),
    }
}
