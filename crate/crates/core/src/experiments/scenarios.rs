//! The named experiments. Each one expands the config into one or more runs
//! and derives its metrics.

use crate::actuator::ActuatorParams;
use crate::control::{
    gravity_feedforward, steady_state_error_pd, ControllerKind, ControllerSpec, GainSet,
    ZieglerNichols, ZnResult,
};
use crate::loads::LoadModel;
use crate::proprioception::{detect_disturbances, score_detections, Channel};
use crate::sim::run_scenario;
use crate::trajectory::ReferenceSignal;

use super::config::{ExperimentConfig, Scenario};
use super::metrics::{compute_metrics, pearson, MetricsError, Segment};
use super::record::RunRecord;
use super::{ExperimentError, MetricRow, ScenarioOutput};

struct Builder<'a> {
    cfg: &'a ExperimentConfig,
    out: ScenarioOutput,
}

impl<'a> Builder<'a> {
    fn new(scenario: Scenario, cfg: &'a ExperimentConfig) -> Self {
        Self {
            cfg,
            out: ScenarioOutput {
                scenario,
                config: cfg.clone(),
                runs: Vec::new(),
                metrics: Vec::new(),
                events: Vec::new(),
                tuning: None,
            },
        }
    }

    fn metric(&mut self, run: &str, name: impl Into<String>, value: f64) {
        self.out.metrics.push(MetricRow {
            run: run.to_string(),
            metric: name.into(),
            value,
        });
    }

    fn simulate(
        &mut self,
        label: &str,
        load: &LoadModel,
        spec: &ControllerSpec,
        reference: &ReferenceSignal,
    ) -> Result<usize, ExperimentError> {
        let cfg = self.cfg;
        let mut rec = run_scenario(&cfg.sim, &cfg.plant, load, spec, reference)
            .map_err(|e| ExperimentError::Run(label.to_string(), e))?;
        rec.meta.scenario = self.out.scenario.name().to_string();
        rec.meta.label = label.to_string();
        rec.meta.config_hash = cfg.hash();
        self.out.runs.push((label.to_string(), rec));
        let idx = self.out.runs.len() - 1;
        let saturated = self.out.runs[idx].1.saturated_ticks as f64;
        self.metric(label, "saturated_ticks", saturated);
        Ok(idx)
    }

    fn record(&self, idx: usize) -> &RunRecord {
        &self.out.runs[idx].1
    }

    /// Whole-run metrics plus, for staircase references, one block per level.
    fn segment_metrics(&mut self, idx: usize, reference: &ReferenceSignal) -> Result<Vec<f64>, ExperimentError> {
        let label = self.out.runs[idx].0.clone();
        let whole = compute_metrics(self.record(idx), Segment::all())?;
        for (name, v) in whole.entries() {
            self.metric(&label, name, v);
        }
        let mut per_level = Vec::new();
        if let ReferenceSignal::Staircase { levels, dwell } = reference {
            let end = self.record(idx).rows.last().map_or(0.0, |r| r.t);
            let reached = Segment::dwells(levels.len(), *dwell)
                .into_iter()
                .take_while(|seg| seg.start < end);
            for (i, seg) in reached.enumerate() {
                let m = match compute_metrics(self.record(idx), seg) {
                    Err(MetricsError::EmptySegment { .. }) => break,
                    r => r?,
                };
                for (name, v) in m.entries() {
                    self.metric(&label, format!("level{i:02}.{name}"), v);
                }
                per_level.push(m.steady_state_error_mm);
            }
            if !per_level.is_empty() {
                let mean = per_level.iter().sum::<f64>() / per_level.len() as f64;
                self.metric(&label, "mean_level_steady_state_error_mm", mean);
            }
        }
        Ok(per_level)
    }

    fn tuning(&mut self) -> Result<ZnResult, ExperimentError> {
        let cfg = self.cfg;
        let zn = ZieglerNichols {
            sim: cfg.sim.clone(),
            ..Default::default()
        };
        let r = zn.tune(&cfg.plant, &cfg.load, cfg.scenario.step_mm)?;
        let rows = [
            ("ultimate_gain", r.ultimate_gain),
            ("ultimate_period_s", r.ultimate_period),
            ("p.kp", r.p.kp),
            ("pd.kp", r.pd.kp),
            ("pd.kd", r.pd.kd),
            ("pid.kp", r.pid.kp),
            ("pid.ki", r.pid.ki),
            ("pid.kd", r.pid.kd),
            ("trials", r.trials.len() as f64),
        ];
        for (name, v) in rows {
            self.metric("tuning", name, v);
        }
        self.out.tuning = Some(r.clone());
        Ok(r)
    }
}

fn with_controller_settings(mut spec: ControllerSpec, base: &ControllerSpec) -> ControllerSpec {
    spec.integrator_limit = base.integrator_limit;
    spec.gains.derivative_filter_alpha = base.gains.derivative_filter_alpha;
    spec
}

fn pd_spec(gains: &GainSet) -> ControllerSpec {
    ControllerSpec::new(
        ControllerKind::Pd,
        GainSet {
            ki: 0.0,
            feedforward_current: None,
            ..gains.clone()
        },
    )
}

fn pdg_spec(gains: &GainSet, feedforward: f64) -> ControllerSpec {
    ControllerSpec::new(
        ControllerKind::Pdg,
        GainSet {
            ki: 0.0,
            feedforward_current: Some(feedforward),
            ..gains.clone()
        },
    )
}

fn mass_label(prefix: &str, mass: f64) -> String {
    format!("{prefix}-m{mass}")
}

pub(super) fn run(scenario: Scenario, cfg: &ExperimentConfig) -> Result<ScenarioOutput, ExperimentError> {
    let mut b = Builder::new(scenario, cfg);
    let plant: &ActuatorParams = &cfg.plant;
    match scenario {
        Scenario::Tune => {
            let r = b.tuning()?;
            let spec = ControllerSpec::new(
                ControllerKind::P,
                GainSet {
                    kp: r.ultimate_gain,
                    ..GainSet::zero()
                },
            );
            let reference = ReferenceSignal::Step {
                height: cfg.scenario.step_mm,
                at: 0.0,
            };
            let idx = b.simulate("ultimate", &cfg.load, &spec, &reference)?;
            b.segment_metrics(idx, &reference)?;
        }
        Scenario::Step => {
            let r = b.tuning()?;
            for kind in [ControllerKind::P, ControllerKind::Pd, ControllerKind::Pid] {
                let spec = with_controller_settings(r.spec(kind).expect("table row"), &cfg.controller);
                let idx = b.simulate(kind.label(), &cfg.load, &spec, &cfg.reference)?;
                b.segment_metrics(idx, &cfg.reference)?;
            }
            cfg.controller.validate()?;
            let idx = b.simulate("configured", &cfg.load, &cfg.controller, &cfg.reference)?;
            b.segment_metrics(idx, &cfg.reference)?;
        }
        Scenario::Staircase => {
            for &mass in &cfg.scenario.masses {
                let load = LoadModel::Gravity { mass };
                let pd = with_controller_settings(pd_spec(&cfg.controller.gains), &cfg.controller);
                let label = mass_label("pd", mass);
                let idx = b.simulate(&label, &load, &pd, &cfg.reference)?;
                b.segment_metrics(idx, &cfg.reference)?;
                let predicted = steady_state_error_pd(mass, &pd.gains, plant)?;
                b.metric(&label, "predicted_steady_state_error_mm", predicted);

                let ff = gravity_feedforward(mass, plant);
                let pdg = with_controller_settings(pdg_spec(&cfg.controller.gains, ff), &cfg.controller);
                let label = mass_label("pdg", mass);
                let idx = b.simulate(&label, &load, &pdg, &cfg.reference)?;
                b.segment_metrics(idx, &cfg.reference)?;
                b.metric(&label, "feedforward_current_a", ff);
            }
        }
        Scenario::Trajectory => {
            let mass = cfg.scenario.masses.first().copied().unwrap_or(0.0);
            let pd = with_controller_settings(pd_spec(&cfg.controller.gains), &cfg.controller);
            let idx = b.simulate("pd-unloaded", &LoadModel::Null, &pd, &cfg.reference)?;
            b.segment_metrics(idx, &cfg.reference)?;

            let load = LoadModel::Gravity { mass };
            let idx = b.simulate("pd-loaded", &load, &pd, &cfg.reference)?;
            b.segment_metrics(idx, &cfg.reference)?;
            let predicted = steady_state_error_pd(mass, &pd.gains, plant)?;
            b.metric("pd-loaded", "predicted_offset_mm", predicted);

            let ff = gravity_feedforward(mass, plant);
            let pdg = with_controller_settings(pdg_spec(&cfg.controller.gains, ff), &cfg.controller);
            let idx = b.simulate("pdg-loaded", &load, &pdg, &cfg.reference)?;
            b.segment_metrics(idx, &cfg.reference)?;
            b.metric("pdg-loaded", "feedforward_current_a", ff);
        }
        Scenario::BeamStep | Scenario::BeamTrajectory => {
            cfg.controller.validate()?;
            let idx = b.simulate("pd", &cfg.load, &cfg.controller, &cfg.reference)?;
            b.segment_metrics(idx, &cfg.reference)?;
            let rec = b.record(idx);
            let abs_err: Vec<f64> = rec.rows.iter().map(|r| r.error_mm().abs()).collect();
            let abs_sp: Vec<f64> = rec.rows.iter().map(|r| r.setpoint_mm.abs()).collect();
            if let Some(rho) = pearson(&abs_err, &abs_sp) {
                b.metric("pd", "error_displacement_correlation", rho);
            }
        }
        Scenario::Disturbance => {
            cfg.controller.validate()?;
            let idx = b.simulate("pd", &cfg.load, &cfg.controller, &cfg.reference)?;
            let events = detect_disturbances(b.record(idx), &cfg.detector);
            let pulses = match &cfg.load {
                LoadModel::Pulses { schedule } => schedule.clone(),
                _ => Vec::new(),
            };
            let low: Vec<_> = pulses
                .iter()
                .filter(|p| p.torque.abs() <= cfg.scenario.low_torque_limit)
                .copied()
                .collect();
            let tol = cfg.scenario.match_tolerance;
            for channel in [Channel::Velocity, Channel::Current] {
                let all = score_detections(&events, &pulses, channel, tol);
                let sub = score_detections(&events, &low, channel, tol);
                let c = channel.name();
                b.metric("pd", format!("{c}.events"), all.events as f64);
                b.metric("pd", format!("{c}.precision"), all.precision());
                b.metric("pd", format!("{c}.recall"), all.recall());
                b.metric("pd", format!("{c}.low_torque_recall"), sub.recall());
            }
            b.metric("pd", "pulses", pulses.len() as f64);
            b.metric("pd", "low_torque_pulses", low.len() as f64);
            b.out.events = events.into_iter().map(|e| ("pd".to_string(), e)).collect();
        }
    }
    Ok(b.out)
}
