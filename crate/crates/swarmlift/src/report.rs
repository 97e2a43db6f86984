//! Run summaries and scenario assertion checks.

use std::fmt;

use serde::Serialize;
use swarmlift_core::metrics::{indi_step_time_constant, trace_metrics, TraceSummary};
use swarmlift_core::sim::{Scenario, Trace};
use swarmlift_core::Vec3;

use crate::config::Assertions;

/// Trace metrics plus the inner-loop time constant of the scenario vehicle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: TraceSummary,
    /// [s]
    pub indi_time_constant: Option<f64>,
    /// Mean formation velocity over the final window [m/s].
    pub final_velocity: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {:.4} (bound {:.4})", self.name, self.value, self.bound)
    }
}

fn mean_velocity_since(trace: &Trace, from: f64) -> [f64; 2] {
    let tail: Vec<Vec3> = trace.records.iter().filter(|r| r.t >= from).map(|r| r.mean_velocity()).collect();
    if tail.is_empty() {
        return [0.0; 2];
    }
    let mean = tail.iter().sum::<Vec3>() / tail.len() as f64;
    [mean.x, mean.y]
}

fn final_window(assertions: &Assertions) -> f64 {
    assertions.final_window.unwrap_or(5.0)
}

pub fn summarize(trace: &Trace, scenario: Option<&Scenario>, window: f64) -> swarmlift_core::Result<RunSummary> {
    let metrics = trace_metrics(trace)?;
    let end = trace.records.last().map_or(0.0, |r| r.t);
    let indi_time_constant =
        scenario.and_then(|s| indi_step_time_constant(&s.vehicle, &s.indi, s.rates.plant, 0.5).ok());
    Ok(RunSummary {
        scenario: trace.scenario.clone(),
        seed: trace.seed,
        metrics,
        indi_time_constant,
        final_velocity: mean_velocity_since(trace, end - window),
    })
}

/// Summary of a finished run, using the final window of `assertions`.
pub fn summarize_run(trace: &Trace, scenario: &Scenario, assertions: &Assertions) -> swarmlift_core::Result<RunSummary> {
    summarize(trace, Some(scenario), final_window(assertions))
}

pub fn check(summary: &RunSummary, assertions: &Assertions) -> Vec<Check> {
    let m = &summary.metrics;
    let upper = [
        ("max_edge_error", assertions.max_edge_error, m.max_edge_error),
        ("final_edge_error", assertions.final_edge_error, m.final_edge_error),
        ("max_payload_swing", assertions.max_payload_swing, m.max_payload_swing),
        ("max_axis_accel", assertions.max_axis_accel, m.max_axis_accel),
        ("max_tilt", assertions.max_tilt, m.max_tilt),
        ("max_tension", assertions.max_tension, m.max_tension),
    ];
    let mut checks: Vec<Check> = upper
        .into_iter()
        .filter_map(|(name, bound, value)| bound.map(|bound| Check { name, value, bound, pass: value <= bound }))
        .collect();
    if let Some(target) = assertions.final_velocity {
        let v = summary.final_velocity;
        let value = (v[0] - target[0]).hypot(v[1] - target[1]);
        let bound = assertions.final_velocity_tolerance.unwrap_or(0.05);
        checks.push(Check { name: "final_velocity", value, bound, pass: value <= bound });
    }
    checks
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.metrics;
        let opt = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4} s"));
        writeln!(f, "scenario            {} (seed {})", self.scenario, self.seed)?;
        writeln!(f, "records             {} over {:.2} s", m.records, m.duration)?;
        writeln!(f, "max edge error      {:.4} m", m.max_edge_error)?;
        writeln!(f, "final edge error    {:.4} m", m.final_edge_error)?;
        writeln!(f, "velocity rms x/y    {:.4} / {:.4} m/s", m.velocity_tracking_rms[0], m.velocity_tracking_rms[1])?;
        writeln!(f, "final velocity      ({:.4}, {:.4}) m/s", self.final_velocity[0], self.final_velocity[1])?;
        writeln!(f, "max payload swing   {:.4} m", m.max_payload_swing)?;
        writeln!(f, "max tilt            {:.4} rad", m.max_tilt)?;
        writeln!(f, "max tension         {:.4} N", m.max_tension)?;
        writeln!(f, "max axis accel      {:.4} m/s^2", m.max_axis_accel)?;
        writeln!(f, "saturated           {:.2} %", 100.0 * m.saturated_fraction)?;
        writeln!(f, "singular records    {}", m.singular_records)?;
        writeln!(f, "guidance e-fold     {}", opt(m.guidance_time_constant))?;
        write!(f, "indi time constant  {}", opt(self.indi_time_constant))
    }
}
