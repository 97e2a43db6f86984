//! Formation-motion guidance by distance disagreements.
//!
//! The stacked law is
//!
//! ```text
//! u = -c1 v - c2 B̄ D_z D_z̃ e + Ā D̄_z̃ z,     A = c1 A_v + A_a
//! ```
//!
//! where `z̃_k = 1/‖z_k‖`, `X̄ = X ⊗ I₂` and `A_a = A_vr W Bᵀ A_vr`. `W` is the
//! diagonal of `1/d_k`, i.e. `D_z̃` evaluated at the desired shape, which is the
//! weighting under which the designed velocity field `v* = Ā_v W̄ z*` and the
//! velocity error `e_v = v - Ā_v D̄_z̃ z` coincide at the desired shape.
//!
//! Two evaluation routes are provided: [`guidance_law`] builds the block
//! matrices literally, and [`vehicle_acceleration`] evaluates one vehicle from
//! its incident edges only. The simulator uses the second one.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::graph::{check_len, stack, unstack, FormationSpec, RelativeState, COINCIDENT_EPSILON};
use crate::{Error, Result, Vec2};

/// Per-axis bound on the commanded horizontal acceleration [m/s²].
pub const DEFAULT_AXIS_LIMIT: f64 = 1.54;

/// Disagreement matrices, all `n × |E|` with the sparsity of the incidence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DisagreementSet {
    /// `A_v`: generates the designed velocity field.
    pub velocity: DMatrix<f64>,
    /// `A_vr`: the rotational part of `A_v`.
    pub rotational: DMatrix<f64>,
    /// `A_a = A_vr W Bᵀ A_vr`: centripetal feedforward.
    pub feedforward: DMatrix<f64>,
    /// `A = c1 A_v + A_a`.
    pub combined: DMatrix<f64>,
}

impl DisagreementSet {
    pub fn zero(n: usize, m: usize) -> Self {
        Self {
            velocity: DMatrix::zeros(n, m),
            rotational: DMatrix::zeros(n, m),
            feedforward: DMatrix::zeros(n, m),
            combined: DMatrix::zeros(n, m),
        }
    }

    /// Completes a set from `A_v` and its rotational part.
    pub fn new(spec: &FormationSpec, velocity: DMatrix<f64>, rotational: DMatrix<f64>) -> Result<Self> {
        check_pattern(spec, &velocity, "velocity disagreements")?;
        let feedforward = feedforward_matrix(&rotational, spec)?;
        let combined = &velocity * spec.gain_damping + &feedforward;
        Ok(Self {
            velocity,
            rotational,
            feedforward,
            combined,
        })
    }
}

fn check_shape(spec: &FormationSpec, a: &DMatrix<f64>, what: &'static str) -> Result<()> {
    check_len(what, spec.vertex_count(), a.nrows())?;
    check_len(what, spec.edge_count(), a.ncols())
}

fn check_pattern(spec: &FormationSpec, a: &DMatrix<f64>, what: &'static str) -> Result<()> {
    check_shape(spec, a, what)?;
    let b = spec.graph.incidence();
    if a.iter().zip(b.iter()).any(|(&x, &bik)| x != 0.0 && bik == 0.0) {
        return Err(Error::InvalidParameter {
            name: what,
            reason: "entry outside the incidence pattern",
        });
    }
    Ok(())
}

/// Operator-level motion request for the whole team.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MotionCommand {
    /// Translation velocity in the formation body frame [m/s].
    pub translation: [f64; 2],
    /// Spin rate about the centroid, counter-clockwise positive [rad/s].
    pub spin: f64,
    /// Rate of change of the reference (shortest) desired distance [m/s].
    pub scale_rate: f64,
    /// Offset of the altitude setpoint from the nominal altitude [m].
    pub altitude_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MotionLimits {
    pub max_speed: f64,
    pub max_spin: f64,
    pub max_scale_rate: f64,
    /// Bounds on the reference desired distance while scaling [m].
    pub min_reference: f64,
    pub max_reference: f64,
    /// [m]
    pub max_altitude_offset: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        Self {
            max_speed: 1.0,
            max_spin: 0.2,
            max_scale_rate: 0.2,
            min_reference: 0.6,
            max_reference: 1.5,
            max_altitude_offset: 1.0,
        }
    }
}

fn finite_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

impl MotionCommand {
    /// Speed is clipped radially, the other channels per component. Non-finite inputs become 0.
    pub fn clamped(&self, limits: &MotionLimits) -> Self {
        let mut v = Vec2::new(finite_or_zero(self.translation[0]), finite_or_zero(self.translation[1]));
        let speed = v.norm();
        if speed > limits.max_speed {
            v *= limits.max_speed / speed;
        }
        Self {
            translation: [v.x, v.y],
            spin: finite_or_zero(self.spin).clamp(-limits.max_spin, limits.max_spin),
            scale_rate: finite_or_zero(self.scale_rate).clamp(-limits.max_scale_rate, limits.max_scale_rate),
            altitude_offset: finite_or_zero(self.altitude_offset)
                .clamp(-limits.max_altitude_offset, limits.max_altitude_offset),
        }
    }
}

/// Horizontal accelerations for every vehicle at one guidance tick.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceCommand {
    pub accel_xy: Vec<Vec2>,
    pub saturated: Vec<bool>,
    pub produced_at: u64,
}

/// Compact stacked law, before saturation.
pub fn guidance_law(
    spec: &FormationSpec,
    rel: &RelativeState,
    velocities: &[Vec2],
    dis: &DisagreementSet,
) -> Result<Vec<Vec2>> {
    let n = spec.vertex_count();
    let m = spec.edge_count();
    check_len("velocities", n, velocities.len())?;
    check_len("relative state", m, rel.z.len())?;
    check_shape(spec, &dis.combined, "combined disagreements")?;

    let i2 = DMatrix::<f64>::identity(2, 2);
    let b_bar = spec.graph.incidence().kronecker(&i2);
    let a_bar = dis.combined.kronecker(&i2);

    // D_z: 2m × m block diagonal with z_k in block k
    let mut d_z = DMatrix::<f64>::zeros(2 * m, m);
    for (k, zk) in rel.z.iter().enumerate() {
        d_z[(2 * k, k)] = zk.x;
        d_z[(2 * k + 1, k)] = zk.y;
    }
    let z_tilde = DVector::from_iterator(m, rel.norms.iter().map(|n| 1.0 / n));
    let d_z_tilde = DMatrix::from_diagonal(&z_tilde);
    let d_z_tilde_bar = d_z_tilde.kronecker(&i2);
    let e = DVector::from_column_slice(&rel.errors);
    let z = stack(&rel.z);
    let v = stack(velocities);

    let u = -(v * spec.gain_damping) - (b_bar * d_z * d_z_tilde * e) * spec.gain_shape + a_bar * d_z_tilde_bar * z;
    Ok(unstack(&u))
}

/// Scales `u` down uniformly so that neither component exceeds `limit`.
pub fn saturate(u: Vec2, limit: f64) -> (Vec2, bool) {
    let peak = u.x.abs().max(u.y.abs());
    if peak > limit {
        (u * (limit / peak), true)
    } else {
        (u, false)
    }
}

/// Stacked law followed by per-axis saturation.
pub fn guidance_accelerations(
    spec: &FormationSpec,
    rel: &RelativeState,
    velocities: &[Vec2],
    dis: &DisagreementSet,
    axis_limit: f64,
    tick: u64,
) -> Result<GuidanceCommand> {
    let raw = guidance_law(spec, rel, velocities, dis)?;
    let (accel_xy, saturated) = raw.into_iter().map(|u| saturate(u, axis_limit)).unzip();
    Ok(GuidanceCommand {
        accel_xy,
        saturated,
        produced_at: tick,
    })
}

/// What vehicle `i` measures on one of its own edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEdge {
    /// `p_i - p_j` [m].
    pub offset: Vec2,
    /// `d_(i,j)` [m].
    pub desired: f64,
    /// Coefficient of the unit vector `(p_i - p_j)/‖p_i - p_j‖` in the disagreement term.
    pub disagreement: f64,
}

/// An edge of a neighbour, relayed to vehicle `i` because the feedforward
/// couples `i` to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayedEdge {
    /// `z_k` as measured by the relaying neighbour [m].
    pub offset: Vec2,
    pub coefficient: f64,
}

/// Everything vehicle `i` needs to compute its own command.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalView {
    pub edges: Vec<LocalEdge>,
    pub relayed: Vec<RelayedEdge>,
}

/// Builds the view of vehicle `i`, reading only edges incident to `i` or to one of its neighbours.
pub fn local_view(spec: &FormationSpec, rel: &RelativeState, dis: &DisagreementSet, i: usize) -> Result<LocalView> {
    let n = spec.vertex_count();
    if i >= n {
        return Err(Error::DimensionMismatch {
            what: "vehicle index",
            expected: n,
            found: i,
        });
    }
    check_len("relative state", spec.edge_count(), rel.z.len())?;
    check_shape(spec, &dis.combined, "combined disagreements")?;
    let graph = &spec.graph;
    let edges = graph
        .incident_edges(i)
        .map(|(k, sign)| LocalEdge {
            offset: rel.z[k] * sign,
            desired: spec.desired_distances[k],
            disagreement: dis.combined[(i, k)] * sign,
        })
        .collect();
    let mut relayed = Vec::new();
    for (k, &(t, h)) in graph.edges().iter().enumerate() {
        let a = dis.combined[(i, k)];
        if a == 0.0 || t == i || h == i {
            continue;
        }
        let reachable = graph.neighbors(i).any(|j| j == t || j == h);
        if !reachable {
            return Err(Error::InvalidParameter {
                name: "combined disagreements",
                reason: "couples a vehicle to an edge beyond its neighbours",
            });
        }
        relayed.push(RelayedEdge {
            offset: rel.z[k],
            coefficient: a,
        });
    }
    Ok(LocalView { edges, relayed })
}

/// Per-vehicle law, using only the vehicle's own velocity and its local view.
pub fn vehicle_acceleration(gain_damping: f64, gain_shape: f64, velocity: Vec2, view: &LocalView) -> Result<Vec2> {
    let unit = |offset: Vec2, k: usize| {
        let norm = offset.norm();
        if norm <= COINCIDENT_EPSILON {
            Err(Error::CoincidentAgents { edge: k, separation: norm })
        } else {
            Ok((offset / norm, norm))
        }
    };
    let mut u = -velocity * gain_damping;
    for (k, edge) in view.edges.iter().enumerate() {
        let (dir, norm) = unit(edge.offset, k)?;
        u += dir * (edge.disagreement - gain_shape * (norm - edge.desired));
    }
    for (k, edge) in view.relayed.iter().enumerate() {
        let (dir, _) = unit(edge.offset, view.edges.len() + k)?;
        u += dir * edge.coefficient;
    }
    Ok(u)
}

/// `Ā_v D̄_z̃ z`: the velocity field the disagreements ask for at the current shape.
pub fn designed_velocities(velocity_disagreements: &DMatrix<f64>, rel: &RelativeState) -> Vec<Vec2> {
    let mut out = alloc::vec![Vec2::zeros(); velocity_disagreements.nrows()];
    for (i, o) in out.iter_mut().enumerate() {
        for (k, zk) in rel.z.iter().enumerate() {
            let a = velocity_disagreements[(i, k)];
            if a != 0.0 {
                *o += zk * (a / rel.norms[k]);
            }
        }
    }
    out
}

/// `e_v = v - Ā_v D̄_z̃ z`.
pub fn velocity_error(dis: &DisagreementSet, velocities: &[Vec2], rel: &RelativeState) -> Result<Vec<Vec2>> {
    check_len("velocities", dis.velocity.nrows(), velocities.len())?;
    check_len("relative state", dis.velocity.ncols(), rel.z.len())?;
    Ok(designed_velocities(&dis.velocity, rel)
        .into_iter()
        .zip(velocities)
        .map(|(d, v)| v - d)
        .collect())
}

/// Largest residual accepted by [`solve_disagreements`] [m/s].
pub const VELOCITY_RESIDUAL_TOLERANCE: f64 = 1e-9;

/// Per-vehicle minimum-norm least squares for `A_v` such that `Ā_v W̄ z* = v*`.
///
/// `shape` gives the desired vertex positions in the formation body frame and
/// must agree with the desired distances of `spec`.
pub fn solve_disagreements(spec: &FormationSpec, desired_velocities: &[Vec2], shape: &[Vec2]) -> Result<DMatrix<f64>> {
    let n = spec.vertex_count();
    check_len("desired velocities", n, desired_velocities.len())?;
    check_len("shape", n, shape.len())?;
    let edges = spec.graph.edges();
    let unit_star: Vec<Vec2> = edges
        .iter()
        .zip(&spec.desired_distances)
        .map(|(&(t, h), &d)| (shape[t] - shape[h]) / d)
        .collect();
    for (u, d) in unit_star.iter().zip(&spec.desired_distances) {
        if (u.norm() - 1.0).abs() * d > 1e-9 * d.max(1.0) {
            return Err(Error::InvalidParameter {
                name: "shape",
                reason: "inconsistent with the desired distances",
            });
        }
    }

    let mut a_v = DMatrix::zeros(n, spec.edge_count());
    for (i, target) in desired_velocities.iter().enumerate() {
        let incident: Vec<usize> = spec.graph.incident_edges(i).map(|(k, _)| k).collect();
        if target.norm() == 0.0 {
            continue;
        }
        let mut m = DMatrix::zeros(2, incident.len());
        for (c, &k) in incident.iter().enumerate() {
            m[(0, c)] = unit_star[k].x;
            m[(1, c)] = unit_star[k].y;
        }
        let rhs = DVector::from_column_slice(&[target.x, target.y]);
        let coeffs = m
            .clone()
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|_| Error::InfeasibleVelocity { vehicle: i, residual: target.norm() })?;
        let residual = (&m * &coeffs - rhs).norm();
        if residual > VELOCITY_RESIDUAL_TOLERANCE {
            return Err(Error::InfeasibleVelocity { vehicle: i, residual });
        }
        for (c, &k) in incident.iter().enumerate() {
            a_v[(i, k)] = coeffs[c];
        }
    }
    Ok(a_v)
}

/// `A_a = A_vr W Bᵀ A_vr` with `W = diag(1/d_k)`.
pub fn feedforward_matrix(rotational: &DMatrix<f64>, spec: &FormationSpec) -> Result<DMatrix<f64>> {
    check_pattern(spec, rotational, "rotational disagreements")?;
    let w = DMatrix::from_diagonal(&DVector::from_iterator(
        spec.edge_count(),
        spec.desired_distances.iter().map(|d| 1.0 / d),
    ));
    Ok(rotational * w * spec.graph.incidence().transpose() * rotational)
}

/// Unit motions of the team, solved once at the desired shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionBasis {
    /// 1 m/s along body x.
    pub translation_x: DMatrix<f64>,
    /// 1 m/s along body y.
    pub translation_y: DMatrix<f64>,
    /// 1 rad/s counter-clockwise about the centroid of `shape`.
    pub rotation: DMatrix<f64>,
}

impl MotionBasis {
    pub fn new(spec: &FormationSpec, shape: &[Vec2]) -> Result<Self> {
        check_len("shape", spec.vertex_count(), shape.len())?;
        let n = shape.len();
        let centroid = shape.iter().sum::<Vec2>() / n as f64;
        let x = alloc::vec![Vec2::new(1.0, 0.0); n];
        let y = alloc::vec![Vec2::new(0.0, 1.0); n];
        let spin: Vec<Vec2> = shape
            .iter()
            .map(|p| {
                let r = p - centroid;
                Vec2::new(-r.y, r.x)
            })
            .collect();
        Ok(Self {
            translation_x: solve_disagreements(spec, &x, shape)?,
            translation_y: solve_disagreements(spec, &y, shape)?,
            rotation: solve_disagreements(spec, &spin, shape)?,
        })
    }
}

/// Superposes the unit motions scaled by `cmd` and advances the desired
/// distances by `cmd.scale_rate` over `dt`.
///
/// Scaling is uniform: the shortest desired distance moves at `scale_rate`
/// (bounded by the limits) and every other distance keeps its ratio to it.
pub fn compose_motion(
    cmd: &MotionCommand,
    basis: &MotionBasis,
    spec: &FormationSpec,
    dt: f64,
    limits: &MotionLimits,
) -> Result<(DisagreementSet, Vec<f64>)> {
    let reference = spec.desired_distances.iter().copied().fold(f64::INFINITY, f64::min);
    let target = (reference + cmd.scale_rate * dt).clamp(limits.min_reference, limits.max_reference);
    let factor = if cmd.scale_rate == 0.0 { 1.0 } else { target / reference };
    let distances: Vec<f64> = spec.desired_distances.iter().map(|d| d * factor).collect();

    let scaled = FormationSpec {
        desired_distances: distances.clone(),
        ..spec.clone()
    };
    let rotational = &basis.rotation * cmd.spin;
    let velocity = &basis.translation_x * cmd.translation[0] + &basis.translation_y * cmd.translation[1] + &rotational;
    Ok((DisagreementSet::new(&scaled, velocity, rotational)?, distances))
}
