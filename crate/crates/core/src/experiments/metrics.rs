//! Step-response and tracking metrics over a time segment of a run.

use thiserror::Error;

use super::record::{Row, RunRecord};

/// Half-open time window `[start, end)` of a record, s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    /// The whole record.
    pub fn all() -> Self {
        Self {
            start: f64::NEG_INFINITY,
            end: f64::INFINITY,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    /// Consecutive segments of length `dwell` starting at 0.
    pub fn dwells(count: usize, dwell: f64) -> Vec<Segment> {
        (0..count)
            .map(|i| Segment::new(i as f64 * dwell, (i + 1) as f64 * dwell))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("segment [{start}, {end}) contains fewer than two samples")]
    EmptySegment { start: f64, end: f64 },
    #[error("metric {0} is undefined for this response")]
    UndefinedMetric(&'static str),
}

/// Step metrics are `None` when the segment has no step or the response
/// never crosses the corresponding band.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub overshoot_percent: Option<f64>,
    /// 10 % to 90 % of the step, s.
    pub rise_time_s: Option<f64>,
    /// From segment start until the response stays inside the 2 % band, s.
    pub settling_time_s: Option<f64>,
    /// |mean error| over the last 20 % of the segment, mm.
    pub steady_state_error_mm: f64,
    /// Mean error over the last 20 % of the segment, mm, signed.
    pub steady_state_bias_mm: f64,
    pub rms_tracking_error_mm: f64,
    /// Mean error over the whole segment, mm, signed.
    pub mean_error_mm: f64,
}

impl Metrics {
    /// Look up a metric by name, failing on undefined ones.
    pub fn get(&self, name: &'static str) -> Result<f64, MetricsError> {
        let v = match name {
            "overshoot_percent" => self.overshoot_percent,
            "rise_time_s" => self.rise_time_s,
            "settling_time_s" => self.settling_time_s,
            "steady_state_error_mm" => Some(self.steady_state_error_mm),
            "steady_state_bias_mm" => Some(self.steady_state_bias_mm),
            "rms_tracking_error_mm" => Some(self.rms_tracking_error_mm),
            "mean_error_mm" => Some(self.mean_error_mm),
            _ => None,
        };
        v.ok_or(MetricsError::UndefinedMetric(name))
    }

    /// Defined metrics as (name, value) pairs, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        if let Some(v) = self.overshoot_percent {
            out.push(("overshoot_percent", v));
        }
        if let Some(v) = self.rise_time_s {
            out.push(("rise_time_s", v));
        }
        if let Some(v) = self.settling_time_s {
            out.push(("settling_time_s", v));
        }
        out.push(("steady_state_error_mm", self.steady_state_error_mm));
        out.push(("steady_state_bias_mm", self.steady_state_bias_mm));
        out.push(("rms_tracking_error_mm", self.rms_tracking_error_mm));
        out.push(("mean_error_mm", self.mean_error_mm));
        out
    }
}

const STEP_EPS: f64 = 1e-9;
const SETTLING_BAND: f64 = 0.02;
const STEADY_FRACTION: f64 = 0.2;

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// First time the normalised response reaches `level`, linearly interpolated.
fn crossing(rows: &[Row], y0: f64, step: f64, level: f64) -> Option<f64> {
    let norm = |r: &Row| (r.position_mm - y0) / step;
    let first = rows.first()?;
    if norm(first) >= level {
        return Some(first.t);
    }
    rows.windows(2).find_map(|w| {
        let (a, b) = (norm(&w[0]), norm(&w[1]));
        (a < level && b >= level).then(|| w[0].t + (level - a) / (b - a) * (w[1].t - w[0].t))
    })
}

/// Metrics of the part of `record` inside `segment`.
///
/// The response starts from the measured position at the first sample of the
/// segment and targets the setpoint at its last sample.
pub fn compute_metrics(record: &RunRecord, segment: Segment) -> Result<Metrics, MetricsError> {
    let rows: Vec<Row> = record
        .rows
        .iter()
        .filter(|r| segment.contains(r.t))
        .copied()
        .collect();
    compute_metrics_rows(&rows).ok_or(MetricsError::EmptySegment {
        start: segment.start,
        end: segment.end,
    })
}

fn compute_metrics_rows(rows: &[Row]) -> Option<Metrics> {
    if rows.len() < 2 {
        return None;
    }
    let t0 = rows[0].t;
    let y0 = rows[0].position_mm;
    let target = rows[rows.len() - 1].setpoint_mm;
    let step = target - y0;

    let tail_start = rows.len() - ((rows.len() as f64 * STEADY_FRACTION).ceil() as usize).max(1);
    let steady_bias = mean(rows[tail_start..].iter().map(Row::error_mm));
    let rms = mean(rows.iter().map(|r| r.error_mm().powi(2))).sqrt();
    let mean_error = mean(rows.iter().map(Row::error_mm));

    let (mut overshoot, mut rise, mut settling) = (None, None, None);
    if step.abs() > STEP_EPS {
        let peak = rows
            .iter()
            .map(|r| (r.position_mm - y0) / step)
            .fold(f64::NEG_INFINITY, f64::max);
        overshoot = Some(((peak - 1.0) * 100.0).max(0.0));
        if let (Some(a), Some(b)) = (
            crossing(rows, y0, step, 0.1),
            crossing(rows, y0, step, 0.9),
        ) {
            rise = Some(b - a);
        }
        let band = SETTLING_BAND * step.abs();
        match rows.iter().rposition(|r| (r.position_mm - target).abs() > band) {
            None => settling = Some(0.0),
            Some(i) if i + 1 < rows.len() => settling = Some(rows[i + 1].t - t0),
            Some(_) => {}
        }
    }

    Some(Metrics {
        overshoot_percent: overshoot,
        rise_time_s: rise,
        settling_time_s: settling,
        steady_state_error_mm: steady_bias.abs(),
        steady_state_bias_mm: steady_bias,
        rms_tracking_error_mm: rms,
        mean_error_mm: mean_error,
    })
}

/// Pearson correlation coefficient; `None` for constant or mismatched input.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs.iter().copied());
    let my = mean(ys.iter().copied());
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn record(samples: impl Iterator<Item = (f64, f64, f64)>) -> RunRecord {
        let mut r = RunRecord::new(0);
        for (t, sp, y) in samples {
            r.rows.push(Row {
                t,
                setpoint_mm: sp,
                setpoint_vel_mm_s: 0.0,
                position_mm: y,
                velocity_mm_s: 0.0,
                true_current_a: 0.0,
                sensed_current_a: 0.0,
                command_current_a: 0.0,
                load_torque_nm: 0.0,
                encoder_count: 0,
                velocity_counts_s: 0.0,
            });
        }
        r
    }

    #[test]
    fn perfect_tracking() {
        let r = record((0..1000).map(|i| {
            let t = i as f64 * 1e-3;
            (t, t.sin(), t.sin())
        }));
        let m = compute_metrics(&r, Segment::all()).unwrap();
        assert_eq!(m.steady_state_error_mm, 0.0);
        assert_eq!(m.rms_tracking_error_mm, 0.0);
        assert_eq!(m.mean_error_mm, 0.0);
    }

    #[test]
    fn first_order_rise_time() {
        let tau = 0.1;
        let r = record((0..2000).map(|i| {
            let t = i as f64 * 1e-3;
            (t, 1.0, 1.0 - (-t / tau).exp())
        }));
        let m = compute_metrics(&r, Segment::all()).unwrap();
        assert_abs_diff_eq!(m.rise_time_s.unwrap(), tau * 9f64.ln(), epsilon = 1e-5);
        assert_eq!(m.overshoot_percent, Some(0.0));
        // ln(50)·τ ≈ 0.391 s, rounded up to the next sample
        assert_abs_diff_eq!(m.settling_time_s.unwrap(), tau * 50f64.ln(), epsilon = 1e-3);
    }

    #[test]
    fn overshoot_of_peaked_step() {
        let r = record((0..100).map(|i| {
            let y = if i == 50 { 1.3 } else if i > 10 { 1.0 } else { 0.0 };
            (i as f64 * 1e-3, 1.0, y)
        }));
        let m = compute_metrics(&r, Segment::all()).unwrap();
        assert_abs_diff_eq!(m.overshoot_percent.unwrap(), 30.0, epsilon = 1e-9);
    }

    #[test]
    fn undefined_metrics_are_absent() {
        // response never reaches 10 % of the step
        let r = record((0..100).map(|i| (i as f64 * 1e-3, 1.0, 0.0)));
        let m = compute_metrics(&r, Segment::all()).unwrap();
        assert_eq!(m.rise_time_s, None);
        assert_eq!(m.settling_time_s, None);
        assert_eq!(m.get("rise_time_s"), Err(MetricsError::UndefinedMetric("rise_time_s")));
        assert_eq!(m.steady_state_error_mm, 1.0);
        assert!(compute_metrics(&r, Segment::new(5.0, 6.0)).is_err());
    }

    #[test]
    fn segments_use_their_own_initial_value() {
        let r = record((0..4000).map(|i| {
            let t = i as f64 * 1e-3;
            let (sp, y) = if t < 2.0 { (1.0, 1.0) } else { (-1.0, 1.0 - 2.0 * (1.0 - (-(t - 2.0) / 0.05).exp())) };
            (t, sp, y)
        }));
        let m = compute_metrics(&r, Segment::new(2.0, 4.0)).unwrap();
        assert_abs_diff_eq!(m.rise_time_s.unwrap(), 0.05 * 9f64.ln(), epsilon = 1e-4);
    }

    #[test]
    fn pearson_basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(pearson(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pearson(&x, &[-1.0, -2.0, -3.0, -4.0]).unwrap(), -1.0, epsilon = 1e-12);
        assert_eq!(pearson(&x, &[1.0; 4]), None);
    }

    proptest! {
        #[test]
        fn metrics_are_non_negative(
            ys in proptest::collection::vec(-5.0f64..5.0, 2..200),
            sp in -5.0f64..5.0,
        ) {
            let r = record(ys.iter().enumerate().map(|(i, &y)| (i as f64 * 1e-3, sp, y)));
            let m = compute_metrics(&r, Segment::all()).unwrap();
            for (_, v) in m.entries().into_iter().filter(|(n, _)| !n.contains("bias") && !n.starts_with("mean")) {
                prop_assert!(v >= 0.0);
            }
            if let (Some(rise), Some(settle)) = (m.rise_time_s, m.settling_time_s) {
                if settle > 0.0 {
                    prop_assert!(settle + 1e-12 >= rise);
                }
            }
        }
    }
}
