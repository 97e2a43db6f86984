//! Point-mass payload on massless taut-only ropes modelled as stiff spring-dampers.

use alloc::vec::Vec;

use crate::math::{is_finite3, sqrt};
use crate::{Error, Mat3, Result, Vec3, GRAVITY};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PayloadParams {
    /// [kg]
    pub mass: f64,
    /// Unstretched length [m].
    pub rope_length: f64,
    /// [N/m]
    pub rope_stiffness: f64,
    /// [N·s/m]
    pub rope_damping: f64,
    /// Attachment point relative to each vehicle's centre of mass, navigation
    /// frame [m]. Empty means every rope attaches at the centre of mass.
    pub attachment_offsets: Vec<Vec3>,
}

impl Default for PayloadParams {
    fn default() -> Self {
        Self {
            mass: 0.4,
            rope_length: sqrt(1.25),
            rope_stiffness: 1e4,
            rope_damping: 50.0,
            attachment_offsets: Vec::new(),
        }
    }
}

impl PayloadParams {
    pub fn validate(&self, n_vehicles: usize) -> Result<()> {
        for (name, value) in [
            ("payload mass", self.mass),
            ("rope_length", self.rope_length),
            ("rope_stiffness", self.rope_stiffness),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter { name, reason: "must be positive and finite" });
            }
        }
        if !(self.rope_damping.is_finite() && self.rope_damping >= 0.0) {
            return Err(Error::InvalidParameter { name: "rope_damping", reason: "must be non-negative" });
        }
        if !self.attachment_offsets.is_empty() && self.attachment_offsets.len() != n_vehicles {
            return Err(Error::DimensionMismatch {
                what: "attachment_offsets",
                expected: n_vehicles,
                found: self.attachment_offsets.len(),
            });
        }
        Ok(())
    }

    fn attachment(&self, i: usize, position: &Vec3) -> Vec3 {
        match self.attachment_offsets.get(i) {
            Some(offset) => position + offset,
            None => *position,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PayloadState {
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Rope forces on each vehicle, pointing from the vehicle toward the payload.
/// The payload receives the negation of each.
pub fn rope_forces(payload: &PayloadState, positions: &[Vec3], velocities: &[Vec3], params: &PayloadParams) -> Vec<Vec3> {
    positions
        .iter()
        .zip(velocities)
        .enumerate()
        .map(|(i, (p, v))| {
            let r = payload.position - params.attachment(i, p);
            let length = r.norm();
            let stretch = length - params.rope_length;
            if stretch <= 0.0 || length == 0.0 {
                return Vec3::zeros();
            }
            let dir = r / length;
            let stretch_rate = (payload.velocity - v).dot(&dir);
            let magnitude = (params.rope_stiffness * stretch + params.rope_damping * stretch_rate).max(0.0);
            dir * magnitude
        })
        .collect()
}

/// `−Σ tension + M g` on the payload.
pub fn payload_force(tensions: &[Vec3], params: &PayloadParams) -> Vec3 {
    -tensions.iter().sum::<Vec3>() - Vec3::new(0.0, 0.0, params.mass * GRAVITY)
}

/// Longest accepted payload step [s].
pub const MAX_PAYLOAD_STEP: f64 = 0.001;

pub fn step_payload(payload: &PayloadState, force: &Vec3, params: &PayloadParams, dt: f64, time: f64) -> Result<PayloadState> {
    if !(dt > 0.0 && dt <= MAX_PAYLOAD_STEP) {
        return Err(Error::InvalidParameter { name: "dt", reason: "payload step must lie in (0, 0.001] s" });
    }
    let velocity = payload.velocity + force * (dt / params.mass);
    let position = payload.position + velocity * dt;
    if !(is_finite3(&velocity) && is_finite3(&position)) {
        return Err(Error::NonFiniteState { what: "payload state", time });
    }
    Ok(PayloadState { position, velocity })
}

/// Kinetic plus gravitational energy of the payload plus elastic energy of the ropes [J].
pub fn payload_energy(payload: &PayloadState, positions: &[Vec3], params: &PayloadParams) -> f64 {
    let kinetic = 0.5 * params.mass * payload.velocity.norm_squared();
    let gravity = params.mass * GRAVITY * payload.position.z;
    let elastic: f64 = positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let s = ((payload.position - params.attachment(i, p)).norm() - params.rope_length).max(0.0);
            0.5 * params.rope_stiffness * s * s
        })
        .sum();
    kinetic + gravity + elastic
}

/// Static hang under `positions`: bisects the depth below the centroid at which the
/// vertical rope forces carry the payload weight, then removes the remaining
/// horizontal imbalance by Newton iteration.
pub fn hanging_equilibrium(positions: &[Vec3], params: &PayloadParams) -> Result<PayloadState> {
    if positions.is_empty() {
        return Err(Error::DimensionMismatch { what: "vehicle positions", expected: 1, found: 0 });
    }
    let attach: Vec<Vec3> = positions.iter().enumerate().map(|(i, p)| params.attachment(i, p)).collect();
    let centroid = attach.iter().sum::<Vec3>() / attach.len() as f64;
    let widest = attach
        .iter()
        .map(|a| (a.xy() - centroid.xy()).norm())
        .fold(0.0, f64::max);
    if widest >= params.rope_length {
        return Err(Error::RopeInfeasible { separation: 2.0 * widest, rope_length: params.rope_length });
    }
    let lift = |depth: f64| -> f64 {
        let x = centroid - Vec3::new(0.0, 0.0, depth);
        attach
            .iter()
            .map(|a| {
                let r = a - x;
                let length = r.norm();
                let s = length - params.rope_length;
                if s > 0.0 {
                    params.rope_stiffness * s * r.z / length
                } else {
                    0.0
                }
            })
            .sum()
    };
    let weight = params.mass * GRAVITY;
    let mut lo = 0.0;
    let mut hi = params.rope_length + weight / params.rope_stiffness + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lift(mid) < weight {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = centroid - Vec3::new(0.0, 0.0, 0.5 * (lo + hi));

    // Newton on the full net force; slack ropes drop out of both terms.
    let net = |x: &Vec3| -> (Vec3, Mat3) {
        let mut f = Vec3::new(0.0, 0.0, -weight);
        let mut jac = Mat3::zeros();
        for a in &attach {
            let r = a - x;
            let length = r.norm();
            if length > params.rope_length {
                let u = r / length;
                f += u * (params.rope_stiffness * (length - params.rope_length));
                let ratio = params.rope_length / length;
                jac -= (Mat3::identity() * (1.0 - ratio) + u * u.transpose() * ratio) * params.rope_stiffness;
            }
        }
        (f, jac)
    };
    let tolerance = 1e-12 * weight.max(1.0);
    for _ in 0..100 {
        let (f, jac) = net(&x);
        if f.norm() <= tolerance {
            break;
        }
        let Some(inv) = jac.try_inverse() else { break };
        let step = -(inv * f);
        let mut scale = 1.0;
        while scale > 1e-6 && net(&(x + step * scale)).0.norm() >= f.norm() {
            scale *= 0.5;
        }
        x += step * scale;
    }
    Ok(PayloadState {
        position: x,
        velocity: Vec3::zeros(),
    })
}

/// Rope tension for a rigid symmetric hang from `n` vehicles on a circle of radius `radius`:
/// `(Mg/n) · l / √(l² − radius²)`.
pub fn symmetric_tension(mass: f64, n: usize, radius: f64, rope_length: f64) -> Result<f64> {
    if radius >= rope_length {
        return Err(Error::RopeInfeasible { separation: 2.0 * radius, rope_length });
    }
    Ok(mass * GRAVITY / n as f64 * rope_length / sqrt(rope_length * rope_length - radius * radius))
}
