//! Thrust and tension budget that bounds the commandable horizontal
//! acceleration, and the resulting inequality on the guidance gains.

use crate::math::{acos, sin, sqrt};
use crate::{Error, Result, GRAVITY};

/// Which horizontal tension figure feeds the acceleration budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TensionModel {
    /// `share · M g`.
    #[default]
    Stated,
    /// [`horizontal_tension_bound`] at the worst side length.
    Formula,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct WorstCaseInputs {
    /// [kg]
    pub m_vehicle: f64,
    /// [kg]
    pub m_payload: f64,
    /// Total thrust available per vehicle [N].
    pub f_max_total: f64,
    /// Fraction of the payload weight carried by one vehicle.
    pub share_fraction: f64,
    /// Rope length [m].
    pub rope_length: f64,
    /// Worst side length of the square [m].
    pub z_side_worst: f64,
    /// [m/s]
    pub max_speed: f64,
    /// [m]
    pub max_edge_error: f64,
    /// Attitude clamp [rad].
    pub attitude_limit: f64,
    /// Angle of the worst-case acceleration direction to an axis [rad].
    pub diagonal_angle: f64,
    /// Weight of the diagonal edge error in the per-axis sum.
    pub diagonal_weight: f64,
    pub tension_model: TensionModel,
}

impl Default for WorstCaseInputs {
    fn default() -> Self {
        Self {
            m_vehicle: 0.4,
            m_payload: 0.4,
            f_max_total: 6.4,
            share_fraction: 1.0 / 3.0,
            rope_length: sqrt(1.25),
            z_side_worst: 2.0,
            max_speed: 1.0,
            max_edge_error: 1.0,
            attitude_limit: 0.35,
            diagonal_angle: 0.79,
            diagonal_weight: 0.7,
            tension_model: TensionModel::Stated,
        }
    }
}

impl WorstCaseInputs {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("m_vehicle", self.m_vehicle),
            ("f_max_total", self.f_max_total),
            ("rope_length", self.rope_length),
            ("z_side_worst", self.z_side_worst),
            ("attitude_limit", self.attitude_limit),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter { name, reason: "must be positive and finite" });
            }
        }
        for (name, value) in [
            ("m_payload", self.m_payload),
            ("max_speed", self.max_speed),
            ("max_edge_error", self.max_edge_error),
            ("diagonal_angle", self.diagonal_angle),
            ("diagonal_weight", self.diagonal_weight),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidParameter { name, reason: "must be non-negative and finite" });
            }
        }
        if !(self.share_fraction > 0.0 && self.share_fraction <= 1.0) {
            return Err(Error::InvalidParameter { name: "share_fraction", reason: "must lie in (0, 1]" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Gains {
    pub c1: f64,
    pub c2: f64,
    /// Spin disagreement magnitude [rad/s].
    pub mu_r: f64,
}

impl Gains {
    pub const PAPER: Gains = Gains { c1: 0.17, c2: 0.55, mu_r: 0.2 };
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorstCaseBudget {
    /// [rad]
    pub tilt_max: f64,
    /// Tilt the budget is evaluated at: the smaller of `tilt_max` and the attitude clamp [rad].
    pub tilt_used: f64,
    /// [N]
    pub horizontal_budget: f64,
    /// Tension that feeds the acceleration bound [N].
    pub tension_bound: f64,
    /// `share · M g` [N].
    pub tension_stated: f64,
    /// The geometric bound at `z_side_worst` [N].
    pub tension_formula: f64,
    /// [m/s²]
    pub accel_max: f64,
    /// [m/s²]
    pub accel_axis_max: f64,
    /// [m/s²]
    pub inequality_lhs: f64,
    pub gains_ok: bool,
}

/// `acos((m + share·M) g / F)`.
pub fn max_tilt(inputs: &WorstCaseInputs) -> Result<f64> {
    let load = (inputs.m_vehicle + inputs.share_fraction * inputs.m_payload) * GRAVITY;
    if load >= inputs.f_max_total {
        return Err(Error::Overloaded { load, available: inputs.f_max_total });
    }
    Ok(acos(load / inputs.f_max_total))
}

/// `F sin(tilt)`.
pub fn horizontal_budget(f_max_total: f64, tilt_limit: f64) -> f64 {
    f_max_total * sin(tilt_limit)
}

/// `(share · M g) · z / (2 √(l² − z²/4))`.
pub fn horizontal_tension_bound(m_payload: f64, z: f64, rope_length: f64, share_fraction: f64) -> Result<f64> {
    if z >= 2.0 * rope_length {
        return Err(Error::RopeInfeasible { separation: z, rope_length });
    }
    Ok(share_fraction * m_payload * GRAVITY * z / (2.0 * sqrt(rope_length * rope_length - z * z / 4.0)))
}

/// `(budget − tension) / m`.
pub fn max_acceleration(budget: f64, tension_bound: f64, m_vehicle: f64) -> Result<f64> {
    if budget <= tension_bound {
        return Err(Error::NoMargin { budget, tension: tension_bound });
    }
    Ok((budget - tension_bound) / m_vehicle)
}

/// `accel · sin(angle)`.
pub fn axis_limit(accel_max: f64, diagonal_angle: f64) -> f64 {
    accel_max * sin(diagonal_angle)
}

/// `c1·max_speed + c2·(1 + w)·max_edge_error + μ_r·z_side_worst`.
pub fn inequality_lhs(gains: &Gains, inputs: &WorstCaseInputs) -> f64 {
    gains.c1 * inputs.max_speed
        + gains.c2 * (inputs.max_edge_error + inputs.diagonal_weight * inputs.max_edge_error)
        + gains.mu_r * inputs.z_side_worst
}

/// Full pipeline.
pub fn gain_inequality(gains: &Gains, inputs: &WorstCaseInputs) -> Result<WorstCaseBudget> {
    inputs.validate()?;
    let tilt_max = max_tilt(inputs)?;
    let tilt_used = tilt_max.min(inputs.attitude_limit);
    let budget = horizontal_budget(inputs.f_max_total, tilt_used);
    let tension_stated = inputs.share_fraction * inputs.m_payload * GRAVITY;
    let tension_formula = horizontal_tension_bound(inputs.m_payload, inputs.z_side_worst, inputs.rope_length, inputs.share_fraction)?;
    let tension_bound = match inputs.tension_model {
        TensionModel::Stated => tension_stated,
        TensionModel::Formula => tension_formula,
    };
    let accel_max = max_acceleration(budget, tension_bound, inputs.m_vehicle)?;
    let accel_axis_max = axis_limit(accel_max, inputs.diagonal_angle);
    let lhs = inequality_lhs(gains, inputs);
    Ok(WorstCaseBudget {
        tilt_max,
        tilt_used,
        horizontal_budget: budget,
        tension_bound,
        tension_stated,
        tension_formula,
        accel_max,
        accel_axis_max,
        inequality_lhs: lhs,
        gains_ok: lhs <= accel_axis_max,
    })
}
