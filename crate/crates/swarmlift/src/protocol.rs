//! Operator wire protocol: JSON text messages over a websocket, tagged by `type`.
//!
//! Server to client: `hello`, `telemetry`, `ack`, `error`. Client to server: `command`.
//! See `docs/protocol.md` for the full schema.

use serde::{Deserialize, Serialize};
use swarmlift_core::guidance::{MotionCommand, MotionLimits};
use swarmlift_core::sim::Simulation;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Operator,
    Observer,
}

/// Stick positions from the console. Every component is re-clamped on arrival.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorCommand {
    /// Body-frame x and y translation, in [−1, 1].
    pub stick_x: f64,
    pub stick_y: f64,
    /// [−1, 1], counter-clockwise positive.
    pub spin: f64,
    /// [−1, 1], growing positive.
    pub scale: f64,
    /// Offset from the nominal altitude [m].
    pub altitude_delta: f64,
}

fn unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-1.0, 1.0)
    }
}

impl OperatorCommand {
    /// Per-axis clamp to [−1, 1], the translation sticks to the unit disc, and
    /// the altitude offset to the limit. NaN becomes 0.
    pub fn clamped(&self, limits: &MotionLimits) -> Self {
        let (mut x, mut y) = (unit(self.stick_x), unit(self.stick_y));
        let r = x.hypot(y);
        if r > 1.0 {
            x /= r;
            y /= r;
        }
        let a = if self.altitude_delta.is_nan() { 0.0 } else { self.altitude_delta };
        Self {
            stick_x: x,
            stick_y: y,
            spin: unit(self.spin),
            scale: unit(self.scale),
            altitude_delta: a.clamp(-limits.max_altitude_offset, limits.max_altitude_offset),
        }
    }

    /// Full stick maps to the largest speed, spin rate and scale rate.
    pub fn to_motion(&self, limits: &MotionLimits) -> MotionCommand {
        let c = self.clamped(limits);
        MotionCommand {
            translation: [c.stick_x * limits.max_speed, c.stick_y * limits.max_speed],
            spin: c.spin * limits.max_spin,
            scale_rate: c.scale * limits.max_scale_rate,
            altitude_offset: c.altitude_delta,
        }
        .clamped(limits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeTelemetry {
    pub tail: usize,
    pub head: usize,
    /// Horizontal [m].
    pub distance: f64,
    pub desired: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    /// Simulation time [s].
    pub t: f64,
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
    /// (roll, pitch, yaw) [rad].
    pub attitudes: Vec<[f64; 3]>,
    pub edges: Vec<EdgeTelemetry>,
    pub payload: Option<[f64; 3]>,
    /// Rope force on each vehicle [N].
    pub tensions: Vec<[f64; 3]>,
    pub saturated: Vec<bool>,
    /// Motion command in force.
    pub command: MotionCommand,
}

impl TelemetryFrame {
    pub fn capture(sim: &Simulation) -> Self {
        let r = sim.record();
        let arr = |v: &swarmlift_core::Vec3| [v.x, v.y, v.z];
        Self {
            t: r.t,
            positions: r.vehicles.iter().map(|v| arr(&v.position)).collect(),
            velocities: r.vehicles.iter().map(|v| arr(&v.velocity)).collect(),
            attitudes: r.vehicles.iter().map(|v| arr(&v.attitude)).collect(),
            edges: sim
                .spec()
                .graph
                .edges()
                .iter()
                .zip(&r.edges)
                .map(|(&(tail, head), e)| EdgeTelemetry { tail, head, distance: e.distance, desired: e.desired })
                .collect(),
            payload: r.payload.map(|p| arr(&p.position)),
            tensions: r.vehicles.iter().map(|v| arr(&v.tension)).collect(),
            saturated: r.vehicles.iter().map(|v| v.saturated).collect(),
            command: r.command,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        schema_version: u32,
        role: Role,
        scenario: String,
    },
    Telemetry {
        frame: TelemetryFrame,
    },
    /// Echo of an accepted command after clamping, with the motion it maps to.
    Ack {
        command: OperatorCommand,
        motion: MotionCommand,
    },
    Error {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Command { command: OperatorCommand },
}
