//! Test-case execution: the executor contract, a replay executor for recorded
//! traces, a kinematic cut-in executor, criterion evaluation, and post-hoc
//! verification that no selected element left its validity domain.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Aggregate, Dimension, EvaluationCriterion, Interval, Stage, TestBench, TestBenchConfiguration, TestCase, Unit,
};

pub const LONGITUDINAL_ACCELERATION: &str = "longitudinal_acceleration";
pub const LATERAL_ACCELERATION: &str = "lateral_acceleration";
pub const DISTANCE_TO_NEAREST_OBJECT: &str = "distance_to_nearest_object";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecutionError {
    #[error("MALFORMED_TRACE: {0}")]
    MalformedTrace(String),
    #[error("INVALID_PARAMS: {0}")]
    InvalidParams(String),
    #[error("UNKNOWN_QUANTITY: criterion `{criterion}` reads `{quantity}`, which the trace does not record")]
    UnknownQuantity { criterion: String, quantity: String },
    #[error("UNIT_MISMATCH: criterion `{criterion}` expects {expected}, trace records `{quantity}` in {found}")]
    UnitMismatch {
        criterion: String,
        quantity: String,
        expected: Unit,
        found: Unit,
    },
}

impl ExecutionError {
    pub fn code(&self) -> &'static str {
        match self {
            ExecutionError::MalformedTrace(_) => "MALFORMED_TRACE",
            ExecutionError::InvalidParams(_) => "INVALID_PARAMS",
            ExecutionError::UnknownQuantity { .. } => "UNKNOWN_QUANTITY",
            ExecutionError::UnitMismatch { .. } => "UNIT_MISMATCH",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Series {
    pub unit: Unit,
    pub samples: Vec<f64>,
}

/// Recorded quantities of one execution, sampled at a fixed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionTrace {
    pub test_case_id: String,
    pub tbc_id: String,
    pub step: f64,
    pub series: BTreeMap<String, Series>,
}

impl ExecutionTrace {
    pub fn check(&self) -> Result<(), ExecutionError> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(ExecutionError::MalformedTrace(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if self.series.is_empty() {
            return Err(ExecutionError::MalformedTrace("trace records no series".into()));
        }
        let mut expected_len = None;
        for (name, series) in &self.series {
            let n = series.samples.len();
            if n < 2 {
                return Err(ExecutionError::MalformedTrace(format!(
                    "series `{name}` has {n} samples, at least 2 are required"
                )));
            }
            if let Some(bad) = series.samples.iter().find(|x| !x.is_finite()) {
                return Err(ExecutionError::MalformedTrace(format!(
                    "series `{name}` contains non-finite sample {bad}"
                )));
            }
            match expected_len {
                None => expected_len = Some(n),
                Some(m) if m != n => {
                    return Err(ExecutionError::MalformedTrace(format!(
                        "series `{name}` has {n} samples, others have {m}"
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.series.values().next().map_or(0, |s| s.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Observed `[min, max]` of a quantity.
    pub fn hull(&self, quantity: &str) -> Option<Interval> {
        self.series.get(quantity).and_then(|s| Interval::hull(&s.samples))
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            step: self.step,
            samples: self.len(),
            quantities: self
                .series
                .iter()
                .filter_map(|(name, s)| {
                    let iv = Interval::hull(&s.samples)?;
                    Some((
                        name.clone(),
                        QuantitySummary {
                            unit: s.unit,
                            min: iv.lo,
                            max: iv.hi,
                        },
                    ))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantitySummary {
    pub unit: Unit,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub step: f64,
    pub samples: usize,
    pub quantities: BTreeMap<String, QuantitySummary>,
}

/// Runs a test case on a configuration and returns the recorded trace.
pub trait Executor: Sync {
    fn execute(&self, test_case: &TestCase, tbc: &TestBenchConfiguration) -> Result<ExecutionTrace, ExecutionError>;

    /// Equal inputs give equal traces.
    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Emits one stored trace for every execution, independent of the configuration.
#[derive(Debug, Clone)]
pub struct ReplayExecutor {
    trace: ExecutionTrace,
}

impl ReplayExecutor {
    pub fn new(trace: ExecutionTrace) -> Result<Self, ExecutionError> {
        trace.check()?;
        Ok(ReplayExecutor { trace })
    }

    pub fn trace(&self) -> &ExecutionTrace {
        &self.trace
    }
}

impl Executor for ReplayExecutor {
    fn execute(&self, _: &TestCase, _: &TestBenchConfiguration) -> Result<ExecutionTrace, ExecutionError> {
        Ok(self.trace.clone())
    }
}

/// Builds a replay executor from a trace document.
pub fn replay_executor(document: &str) -> Result<ReplayExecutor, ExecutionError> {
    let trace = crate::catalog_io::parse_trace(document).map_err(|e| ExecutionError::MalformedTrace(e.to_string()))?;
    ReplayExecutor::new(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EgoMode {
    /// Ego stays in lane and brakes gently.
    Brake,
    /// Ego changes lanes with a single-period sinusoidal lateral acceleration.
    LaneChange { peak_lateral_acceleration: f64 },
}

/// Parameters of the cut-in scenario. Speeds in km/h, distances in metres
/// between the ego front bumper and the cut-in rear bumper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutInParams {
    pub ego_speed: f64,
    pub cut_in_speed: f64,
    pub start_distance: f64,
    pub trigger_distance: f64,
    pub ego_mode: EgoMode,
}

impl CutInParams {
    fn check(&self) -> Result<(), ExecutionError> {
        let finite = [self.ego_speed, self.cut_in_speed, self.start_distance, self.trigger_distance]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(ExecutionError::InvalidParams("parameters must be finite".into()));
        }
        if self.cut_in_speed <= self.ego_speed {
            return Err(ExecutionError::InvalidParams(format!(
                "cut-in speed {} km/h must exceed ego speed {} km/h",
                self.cut_in_speed, self.ego_speed
            )));
        }
        if self.trigger_distance <= 0.0 {
            return Err(ExecutionError::InvalidParams(format!(
                "lane-change trigger distance must be positive, got {}",
                self.trigger_distance
            )));
        }
        if self.trigger_distance <= self.start_distance {
            return Err(ExecutionError::InvalidParams(
                "trigger distance must lie ahead of the start distance".into(),
            ));
        }
        if let EgoMode::LaneChange { peak_lateral_acceleration } = self.ego_mode {
            if !(peak_lateral_acceleration.is_finite() && peak_lateral_acceleration > 0.0) {
                return Err(ExecutionError::InvalidParams(format!(
                    "peak lateral acceleration must be positive, got {peak_lateral_acceleration}"
                )));
            }
        }
        Ok(())
    }

    /// Time at which the gap reaches the trigger distance.
    pub fn trigger_time(&self) -> f64 {
        (self.trigger_distance - self.start_distance) / kmh_to_ms(self.cut_in_speed - self.ego_speed)
    }
}

pub const VEHICLE_LENGTH: f64 = 4.5;
pub const VEHICLE_WIDTH: f64 = 1.8;
pub const LANE_WIDTH: f64 = 3.5;
/// Duration of the cut-in vehicle's own lane change.
pub const CUT_IN_LANE_CHANGE_DURATION: f64 = 4.0;
pub const DEFAULT_STEP: f64 = 0.01;
pub const DEFAULT_DURATION: f64 = 20.0;

/// Braking profile as (duration, jerk) segments: ramp to -1.5 m/s², hold, release.
const BRAKE_PROFILE: [(f64, f64); 3] = [(0.5, -3.0), (2.0, 0.0), (0.5, 3.0)];

fn kmh_to_ms(v: f64) -> f64 {
    v / 3.6
}

/// Acceleration, velocity and position change after `t` seconds of a
/// piecewise-constant-jerk profile starting from rest.
fn jerk_profile(segments: &[(f64, f64)], t: f64) -> (f64, f64, f64) {
    let (mut a, mut v, mut x) = (0.0, 0.0, 0.0);
    let mut remaining = t.max(0.0);
    for &(len, jerk) in segments {
        let dt = remaining.min(len);
        x += v * dt + a * dt * dt / 2.0 + jerk * dt * dt * dt / 6.0;
        v += a * dt + jerk * dt * dt / 2.0;
        a += jerk * dt;
        remaining -= dt;
        if remaining <= 0.0 {
            return (a, v, x);
        }
    }
    // Past the end the acceleration is zero and speed constant.
    (a, v, x + v * remaining)
}

/// Lateral acceleration and displacement of a single-period sinusoidal lane change.
fn sinusoidal_shift(peak: f64, period: f64, tau: f64) -> (f64, f64) {
    if tau <= 0.0 {
        return (0.0, 0.0);
    }
    if tau >= period {
        return (0.0, peak * period * period / TAU);
    }
    let phase = TAU * tau / period;
    let acc = peak * phase.sin();
    let y = peak * period / TAU * (tau - period / TAU * phase.sin());
    (acc, y)
}

/// Ego lane-change period: the shortest multiple of four steps that moves the
/// ego at least one lane width. Four-step multiples put a sample on the peak.
fn ego_lane_change_period(peak: f64, step: f64) -> f64 {
    let ideal = (TAU * LANE_WIDTH / peak).sqrt();
    let quarters = (ideal / (4.0 * step) - 1e-9).ceil().max(1.0);
    4.0 * step * quarters
}

/// Simulates the cut-in scenario. The ego keeps its speed until the gap to the
/// cut-in vehicle reaches the trigger distance, then brakes or changes lanes.
pub fn simulate_cut_in(params: &CutInParams, step: f64, duration: f64) -> Result<ExecutionTrace, ExecutionError> {
    params.check()?;
    if !(step > 0.0 && step <= 0.1) {
        return Err(ExecutionError::InvalidParams(format!("step must lie in (0, 0.1], got {step}")));
    }
    let t_trigger = params.trigger_time();
    // Ego reacts on the first sample at or after the trigger.
    let k_react = (t_trigger / step - 1e-9).ceil() as usize;
    let t_react = k_react as f64 * step;
    let maneuver = match params.ego_mode {
        EgoMode::Brake => BRAKE_PROFILE.iter().map(|s| s.0).sum(),
        EgoMode::LaneChange { peak_lateral_acceleration } => ego_lane_change_period(peak_lateral_acceleration, step),
    };
    let needed = (t_react + maneuver).max(t_trigger + CUT_IN_LANE_CHANGE_DURATION);
    if !(duration.is_finite() && duration >= needed) {
        return Err(ExecutionError::InvalidParams(format!(
            "duration {duration} s does not cover the maneuver, at least {needed:.3} s needed"
        )));
    }

    let v_ego = kmh_to_ms(params.ego_speed);
    let v_cut = kmh_to_ms(params.cut_in_speed);
    let n = (duration / step + 1e-9).floor() as usize + 1;
    let mut lon = Vec::with_capacity(n);
    let mut lat = Vec::with_capacity(n);
    let mut dist = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * step;
        let tau = if k >= k_react { (k - k_react) as f64 * step } else { 0.0 };
        let (a_lon, a_lat, dx_ego, y_ego) = match params.ego_mode {
            EgoMode::Brake => {
                let (a, _, dx) = jerk_profile(&BRAKE_PROFILE, tau);
                (a, 0.0, dx, 0.0)
            }
            EgoMode::LaneChange { peak_lateral_acceleration } => {
                let (a, y) = sinusoidal_shift(peak_lateral_acceleration, maneuver, tau);
                (0.0, a, 0.0, y)
            }
        };
        // Centre-to-centre offsets of cut-in relative to ego.
        let dx = params.start_distance + VEHICLE_LENGTH + (v_cut - v_ego) * t - dx_ego;
        let cut_in_period = CUT_IN_LANE_CHANGE_DURATION;
        let cut_in_peak = TAU * LANE_WIDTH / (cut_in_period * cut_in_period);
        let (_, y_cut_shift) = sinusoidal_shift(cut_in_peak, cut_in_period, t - t_trigger);
        let dy = LANE_WIDTH - y_cut_shift - y_ego;
        let clear_lon = (dx.abs() - VEHICLE_LENGTH).max(0.0);
        let clear_lat = (dy.abs() - VEHICLE_WIDTH).max(0.0);
        lon.push(a_lon);
        lat.push(a_lat);
        dist.push(clear_lon.hypot(clear_lat));
    }

    let mut series = BTreeMap::new();
    series.insert(
        LONGITUDINAL_ACCELERATION.to_string(),
        Series {
            unit: Unit::MetersPerSecondSquared,
            samples: lon,
        },
    );
    series.insert(
        LATERAL_ACCELERATION.to_string(),
        Series {
            unit: Unit::MetersPerSecondSquared,
            samples: lat,
        },
    );
    series.insert(
        DISTANCE_TO_NEAREST_OBJECT.to_string(),
        Series {
            unit: Unit::Meters,
            samples: dist,
        },
    );
    Ok(ExecutionTrace {
        test_case_id: String::new(),
        tbc_id: String::new(),
        step,
        series,
    })
}

/// Executes cut-in test cases. Reads `v_E`, `v_C` (km/h), `d_s` and `d_sm` (m)
/// from the scenario parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutInExecutor {
    pub ego_mode: EgoMode,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

fn default_duration() -> f64 {
    DEFAULT_DURATION
}

impl CutInExecutor {
    pub fn new(ego_mode: EgoMode) -> Self {
        CutInExecutor {
            ego_mode,
            step: DEFAULT_STEP,
            duration: DEFAULT_DURATION,
        }
    }

    pub fn params_for(&self, test_case: &TestCase) -> Result<CutInParams, ExecutionError> {
        let get = |name: &str, unit: Unit| {
            let p = test_case.scenario.get(name).ok_or_else(|| {
                ExecutionError::InvalidParams(format!("test case `{}` lacks scenario parameter `{name}`", test_case.id))
            })?;
            if p.unit != unit {
                return Err(ExecutionError::InvalidParams(format!(
                    "scenario parameter `{name}` must be given in {unit}, found {}",
                    p.unit
                )));
            }
            Ok(p.value)
        };
        Ok(CutInParams {
            ego_speed: get("v_E", Unit::KilometersPerHour)?,
            cut_in_speed: get("v_C", Unit::KilometersPerHour)?,
            start_distance: get("d_s", Unit::Meters)?,
            trigger_distance: get("d_sm", Unit::Meters)?,
            ego_mode: self.ego_mode,
        })
    }
}

impl Executor for CutInExecutor {
    fn execute(&self, test_case: &TestCase, tbc: &TestBenchConfiguration) -> Result<ExecutionTrace, ExecutionError> {
        let params = self.params_for(test_case)?;
        let mut trace = simulate_cut_in(&params, self.step, self.duration)?;
        trace.test_case_id = test_case.id.clone();
        trace.tbc_id = tbc.id.clone();
        Ok(trace)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub passed: bool,
    /// The aggregate the predicate was evaluated on (min or max over samples).
    pub witness: f64,
}

/// Evaluates each criterion over all samples of its quantity.
pub fn evaluate_criteria(
    trace: &ExecutionTrace,
    criteria: &[EvaluationCriterion],
) -> Result<BTreeMap<String, CriterionResult>, ExecutionError> {
    let mut results = BTreeMap::new();
    for criterion in criteria {
        let series = trace
            .series
            .get(&criterion.quantity)
            .ok_or_else(|| ExecutionError::UnknownQuantity {
                criterion: criterion.id.clone(),
                quantity: criterion.quantity.clone(),
            })?;
        if series.unit != criterion.unit {
            return Err(ExecutionError::UnitMismatch {
                criterion: criterion.id.clone(),
                quantity: criterion.quantity.clone(),
                expected: criterion.unit,
                found: series.unit,
            });
        }
        let hull = Interval::hull(&series.samples)
            .ok_or_else(|| ExecutionError::MalformedTrace(format!("series `{}` is empty", criterion.quantity)))?;
        let witness = match criterion.aggregate {
            Aggregate::Min => hull.lo,
            Aggregate::Max => hull.hi,
        };
        results.insert(
            criterion.id.clone(),
            CriterionResult {
                passed: criterion.comparison.holds(witness, criterion.threshold),
                witness,
            },
        );
    }
    Ok(results)
}

/// An element whose declared validity domain does not contain what the trace observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub dimension: Dimension,
    pub element_id: String,
    pub quantity: String,
    pub unit: Unit,
    pub observed: Interval,
    pub declared: Interval,
}

/// Checks every selected, non-real element against its declared domains.
pub fn verify_validity(tbc: &TestBenchConfiguration, bench: &TestBench, trace: &ExecutionTrace) -> Vec<Violation> {
    let mut violations = Vec::new();
    for element_id in tbc.element_ids() {
        let Some(element) = bench.element(element_id) else {
            continue;
        };
        if element.stage == Stage::Real {
            continue;
        }
        for domain in &element.validity {
            let Some(series) = trace.series.get(&domain.quantity) else {
                continue;
            };
            let Some(observed) = Interval::hull(&series.samples) else {
                continue;
            };
            if series.unit != domain.unit || !domain.interval.contains_interval(&observed) {
                violations.push(Violation {
                    dimension: element.dimension.clone(),
                    element_id: element.id.clone(),
                    quantity: domain.quantity.clone(),
                    unit: domain.unit,
                    observed,
                    declared: domain.interval,
                });
            }
        }
    }
    violations
}
