//! Trace summaries and response-time estimates.

use alloc::vec::Vec;

use crate::indi::{IndiConfig, IndiModel};
use crate::math::{cos, exp, sin, sqrt, tilt};
use crate::sim::{Trace, VehicleRig};
use crate::vehicle::VehicleParams;
use crate::{Error, Result, Vec2, Vec3};

fn interpolate(t0: f64, y0: f64, t1: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        t1
    } else {
        t0 + (t1 - t0) * (level - y0) / (y1 - y0)
    }
}

/// First time, measured from `times[0]`, at which a decaying signal falls to
/// `values[0]/e`, linearly interpolated between samples.
pub fn e_folding_time(times: &[f64], values: &[f64]) -> Option<f64> {
    let y0 = *values.first()?;
    if !(y0 > 0.0) {
        return None;
    }
    let level = y0 * exp(-1.0);
    for k in 1..times.len().min(values.len()) {
        if values[k] <= level {
            return Some(interpolate(times[k - 1], values[k - 1], times[k], values[k], level) - times[0]);
        }
    }
    None
}

/// First time, from `times[0]`, at which a step response rising from
/// `values[0]` covers `1 − 1/e` of the way to `target`.
pub fn step_time_constant(times: &[f64], values: &[f64], target: f64) -> Option<f64> {
    let y0 = *values.first()?;
    let span = target - y0;
    if span == 0.0 {
        return None;
    }
    let level = y0 + span * (1.0 - exp(-1.0));
    for k in 1..times.len().min(values.len()) {
        if (values[k] - level) * span.signum() >= 0.0 {
            return Some(interpolate(times[k - 1], values[k - 1], times[k], values[k], level) - times[0]);
        }
    }
    None
}

fn spectral_power(samples: &[f64], mean: f64, cycles_per_sample: f64) -> f64 {
    let w = core::f64::consts::TAU * cycles_per_sample;
    let (mut re, mut im) = (0.0, 0.0);
    for (j, x) in samples.iter().enumerate() {
        let a = w * j as f64;
        re += (x - mean) * cos(a);
        im -= (x - mean) * sin(a);
    }
    re * re + im * im
}

/// Frequency [Hz] of the strongest tone in `samples` taken every `dt`: the
/// largest non-DC DFT bin, refined by a golden-section search of the
/// continuous spectrum between its neighbours.
pub fn dominant_frequency(samples: &[f64], dt: f64) -> Option<f64> {
    let n = samples.len();
    if n < 4 || !(dt > 0.0) {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let nf = n as f64;
    let mut best = (0usize, 0.0f64);
    for k in 1..n / 2 {
        let power = spectral_power(samples, mean, k as f64 / nf);
        if power > best.1 {
            best = (k, power);
        }
    }
    if best.0 == 0 {
        return None;
    }
    let (mut lo, mut hi) = ((best.0 as f64 - 1.0).max(0.5) / nf, (best.0 as f64 + 1.0) / nf);
    let ratio = 0.5 * (sqrt(5.0) - 1.0);
    for _ in 0..60 {
        let a = hi - ratio * (hi - lo);
        let b = lo + ratio * (hi - lo);
        if spectral_power(samples, mean, a) > spectral_power(samples, mean, b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    Some(0.5 * (lo + hi) / dt)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceSummary {
    pub records: usize,
    /// [s]
    pub duration: f64,
    /// Largest `|e_k|` over the whole trace [m].
    pub max_edge_error: f64,
    /// Largest `|e_k|` in the last record [m].
    pub final_edge_error: f64,
    /// RMS of centroid velocity minus the commanded translation, per axis [m/s].
    pub velocity_tracking_rms: [f64; 2],
    /// Largest horizontal distance of the payload from the team centroid [m].
    pub max_payload_swing: f64,
    /// [rad]
    pub max_tilt: f64,
    /// Largest rope tension [N].
    pub max_tension: f64,
    /// Largest per-axis horizontal demand [m/s²].
    pub max_axis_accel: f64,
    /// Fraction of vehicle records whose guidance output was saturated.
    pub saturated_fraction: f64,
    pub singular_records: usize,
    /// e-folding time of the largest edge error from the first record [s].
    pub guidance_time_constant: Option<f64>,
}

pub fn trace_metrics(trace: &Trace) -> Result<TraceSummary> {
    let first = trace.records.first().ok_or(Error::EmptyTrace)?;
    let last = trace.records.last().ok_or(Error::EmptyTrace)?;
    let mut s = TraceSummary {
        records: trace.records.len(),
        duration: last.t - first.t,
        max_edge_error: 0.0,
        final_edge_error: last.max_abs_edge_error(),
        velocity_tracking_rms: [0.0; 2],
        max_payload_swing: 0.0,
        max_tilt: 0.0,
        max_tension: 0.0,
        max_axis_accel: 0.0,
        saturated_fraction: 0.0,
        singular_records: 0,
        guidance_time_constant: None,
    };
    let mut sq = [0.0; 2];
    let mut saturated = 0usize;
    let mut vehicle_records = 0usize;
    for r in &trace.records {
        s.max_edge_error = s.max_edge_error.max(r.max_abs_edge_error());
        let v = r.mean_velocity();
        let (dx, dy) = (v.x - r.command.translation[0], v.y - r.command.translation[1]);
        sq[0] += dx * dx;
        sq[1] += dy * dy;
        if let Some(p) = &r.payload {
            s.max_payload_swing = s.max_payload_swing.max((p.position.xy() - r.centroid().xy()).norm());
        }
        for v in &r.vehicles {
            s.max_tilt = s.max_tilt.max(tilt(&v.attitude));
            s.max_tension = s.max_tension.max(v.tension.norm());
            s.max_axis_accel = s.max_axis_accel.max(v.nu.x.abs()).max(v.nu.y.abs());
            saturated += usize::from(v.saturated);
            s.singular_records += usize::from(v.singular);
            vehicle_records += 1;
        }
    }
    let n = trace.records.len() as f64;
    s.velocity_tracking_rms = [sqrt(sq[0] / n), sqrt(sq[1] / n)];
    s.saturated_fraction = if vehicle_records > 0 { saturated as f64 / vehicle_records as f64 } else { 0.0 };
    let times: Vec<f64> = trace.records.iter().map(|r| r.t).collect();
    let errors: Vec<f64> = trace.records.iter().map(|r| r.max_abs_edge_error()).collect();
    s.guidance_time_constant = e_folding_time(&times, &errors);
    Ok(s)
}

/// Rise time of the true horizontal acceleration of one hovering vehicle after
/// a step in the demand of `step` m/s², on a noiseless plant.
pub fn indi_step_time_constant(params: &VehicleParams, config: &IndiConfig, plant_rate: u32, step: f64) -> Result<f64> {
    let plant_dt = 1.0 / plant_rate as f64;
    let divider = (plant_rate as f64 / config.rate) as u64;
    if divider == 0 {
        return Err(Error::InvalidParameter { name: "rate", reason: "control rate above plant rate" });
    }
    let model = IndiModel::new(params, params.thrust_coefficient);
    let mut rig = VehicleRig::new(*params, model, *config, Vec3::new(0.0, 0.0, 2.0), Vec3::zeros(), &Vec3::zeros())?;
    let settle = (0.5 * plant_rate as f64) as u64;
    let horizon = settle + plant_rate as u64;
    let mut times = Vec::new();
    let mut accel = Vec::new();
    for k in 0..horizon {
        let t = k as f64 * plant_dt;
        if k % divider == 0 {
            let demand = if k >= settle { Vec2::new(step, 0.0) } else { Vec2::zeros() };
            rig.control::<rand_chacha::ChaCha8Rng>(demand, 2.0, t, None);
        }
        rig.advance(&Vec3::zeros(), plant_dt, t)?;
        if k + 1 >= settle {
            times.push((k + 1) as f64 * plant_dt);
            accel.push(rig.state.accel_true.x);
        }
    }
    step_time_constant(&times, &accel, step).ok_or(Error::InvalidParameter {
        name: "step",
        reason: "acceleration never reached the step",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{EdgeRecord, TraceRecord};
    use crate::guidance::MotionCommand;
    use approx::assert_relative_eq;

    #[test]
    fn e_fold_of_a_pure_exponential() {
        let t: Vec<f64> = (0..1000).map(|k| k as f64 * 0.01).collect();
        let y: Vec<f64> = t.iter().map(|t| 0.4 * exp(-t / 1.3)).collect();
        assert_relative_eq!(e_folding_time(&t, &y).unwrap(), 1.3, epsilon = 1e-4);
        assert!(e_folding_time(&t, &alloc::vec![1.0; 1000]).is_none());
    }

    #[test]
    fn step_constant_of_a_first_order_rise() {
        let t: Vec<f64> = (0..1000).map(|k| k as f64 * 0.001).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.0 * (1.0 - exp(-t / 0.05))).collect();
        assert_relative_eq!(step_time_constant(&t, &y, 2.0).unwrap(), 0.05, epsilon = 1e-5);
    }

    #[test]
    fn dft_finds_the_tone() {
        let dt = 0.02;
        let x: Vec<f64> = (0..1500).map(|k| 0.3 + sin(core::f64::consts::TAU * 0.2 * k as f64 * dt)).collect();
        assert_relative_eq!(dominant_frequency(&x, dt).unwrap(), 0.2, epsilon = 1e-3);
        // a few cycles only, off-bin
        let f = 0.2 / core::f64::consts::TAU;
        let x: Vec<f64> = (0..5000).map(|k| cos(core::f64::consts::TAU * f * k as f64 * dt + 0.4)).collect();
        assert!((dominant_frequency(&x, dt).unwrap() - f).abs() < 0.05 * f);
    }

    #[test]
    fn empty_trace_is_an_error() {
        assert!(matches!(trace_metrics(&Trace::default()), Err(Error::EmptyTrace)));
    }

    #[test]
    fn perfect_hold_has_no_error() {
        let r = TraceRecord {
            t: 0.0,
            command: MotionCommand::default(),
            vehicles: Vec::new(),
            edges: alloc::vec![EdgeRecord { distance: 1.0, desired: 1.0 }; 6],
            payload: None,
        };
        let mut r2 = r.clone();
        r2.t = 1.0;
        let trace = Trace { records: alloc::vec![r, r2], ..Default::default() };
        let s = trace_metrics(&trace).unwrap();
        assert_eq!(s.max_edge_error, 0.0);
        assert_eq!(s.duration, 1.0);
    }

    #[test]
    fn indi_loop_is_fast() {
        let tau = indi_step_time_constant(&VehicleParams::default(), &IndiConfig::default(), 1024, 0.5).unwrap();
        assert!(tau > 0.01 && tau < 0.1, "tau {tau}");
    }
}
