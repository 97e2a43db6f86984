//! Double-integrator team `ṗ = v, v̇ = u` under the guidance law, integrated with RK4.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::graph::{check_len, relative_positions, FormationSpec};
use crate::guidance::{guidance_law, saturate, DisagreementSet};
use crate::{Error, Result, Vec2};

#[derive(Debug, Clone, PartialEq)]
pub struct IdealState {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdealModel {
    pub spec: FormationSpec,
    pub disagreements: DisagreementSet,
    /// Per-axis acceleration bound; `None` leaves the law unsaturated.
    pub axis_limit: Option<f64>,
}

impl IdealModel {
    pub fn new(spec: FormationSpec) -> Self {
        let (n, m) = (spec.vertex_count(), spec.edge_count());
        Self {
            spec,
            disagreements: DisagreementSet::zero(n, m),
            axis_limit: None,
        }
    }

    pub fn accelerations(&self, state: &IdealState) -> Result<Vec<Vec2>> {
        let rel = relative_positions(&self.spec, &state.positions)?;
        let u = guidance_law(&self.spec, &rel, &state.velocities, &self.disagreements)?;
        Ok(match self.axis_limit {
            Some(limit) => u.into_iter().map(|u| saturate(u, limit).0).collect(),
            None => u,
        })
    }

    pub fn step(&self, state: &IdealState, dt: f64) -> Result<IdealState> {
        check_len("velocities", state.positions.len(), state.velocities.len())?;
        let shift = |s: &IdealState, dp: &[Vec2], dv: &[Vec2], h: f64| IdealState {
            positions: s.positions.iter().zip(dp).map(|(p, d)| p + d * h).collect(),
            velocities: s.velocities.iter().zip(dv).map(|(v, d)| v + d * h).collect(),
        };
        let k1v = self.accelerations(state)?;
        let k1p = state.velocities.clone();
        let s2 = shift(state, &k1p, &k1v, dt / 2.0);
        let k2v = self.accelerations(&s2)?;
        let k2p = s2.velocities.clone();
        let s3 = shift(state, &k2p, &k2v, dt / 2.0);
        let k3v = self.accelerations(&s3)?;
        let k3p = s3.velocities.clone();
        let s4 = shift(state, &k3p, &k3v, dt);
        let k4v = self.accelerations(&s4)?;
        let k4p = s4.velocities.clone();
        let combine = |base: &[Vec2], a: &[Vec2], b: &[Vec2], c: &[Vec2], d: &[Vec2]| -> Vec<Vec2> {
            (0..base.len())
                .map(|i| base[i] + (a[i] + b[i] * 2.0 + c[i] * 2.0 + d[i]) * (dt / 6.0))
                .collect()
        };
        let next = IdealState {
            positions: combine(&state.positions, &k1p, &k2p, &k3p, &k4p),
            velocities: combine(&state.velocities, &k1v, &k2v, &k3v, &k4v),
        };
        if next.positions.iter().chain(&next.velocities).any(|v| !(v.x.is_finite() && v.y.is_finite())) {
            return Err(Error::NonFiniteState { what: "ideal state", time: f64::NAN });
        }
        Ok(next)
    }

    /// States at `t = 0, dt, 2dt, …` up to `duration`.
    pub fn simulate(&self, initial: IdealState, dt: f64, duration: f64) -> Result<Vec<(f64, IdealState)>> {
        if !(dt > 0.0 && duration >= 0.0) {
            return Err(Error::InvalidParameter { name: "dt", reason: "must be positive" });
        }
        let steps = libm::round(duration / dt) as usize;
        let mut out = Vec::with_capacity(steps + 1);
        let mut state = initial;
        for k in 0..steps {
            let next = self.step(&state, dt).map_err(|e| match e {
                Error::NonFiniteState { what, .. } => Error::NonFiniteState { what, time: (k + 1) as f64 * dt },
                other => other,
            })?;
            out.push((k as f64 * dt, state));
            state = next;
        }
        out.push((steps as f64 * dt, state));
        Ok(out)
    }
}

/// The designed velocity field `Ā W̄ B̄ᵀ p` with `W = diag(1/d_k)`.
pub fn designed_flow(spec: &FormationSpec, velocity_disagreements: &DMatrix<f64>, positions: &[Vec2]) -> Vec<Vec2> {
    let mut out = alloc::vec![Vec2::zeros(); positions.len()];
    for (k, (&(t, h), d)) in spec.graph.edges().iter().zip(&spec.desired_distances).enumerate() {
        let zk = (positions[t] - positions[h]) / *d;
        for (i, o) in out.iter_mut().enumerate() {
            let a = velocity_disagreements[(i, k)];
            if a != 0.0 {
                *o += zk * a;
            }
        }
    }
    out
}

/// Integrates `ṗ = Ā W̄ B̄ᵀ p` with RK4 from `p0` for `duration`.
pub fn designed_trajectory(spec: &FormationSpec, velocity_disagreements: &DMatrix<f64>, p0: &[Vec2], duration: f64, steps: usize) -> Vec<Vec2> {
    let h = duration / steps.max(1) as f64;
    let f = |p: &[Vec2]| designed_flow(spec, velocity_disagreements, p);
    let add = |p: &[Vec2], d: &[Vec2], s: f64| -> Vec<Vec2> { p.iter().zip(d).map(|(p, d)| p + d * s).collect() };
    let mut p = p0.to_vec();
    for _ in 0..steps {
        let k1 = f(&p);
        let k2 = f(&add(&p, &k1, h / 2.0));
        let k3 = f(&add(&p, &k2, h / 2.0));
        let k4 = f(&add(&p, &k3, h));
        for i in 0..p.len() {
            p[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{square_formation_spec, square_shape};
    use crate::guidance::MotionBasis;
    use approx::assert_relative_eq;

    #[test]
    fn desired_shape_at_rest_stays_put() {
        let model = IdealModel::new(square_formation_spec());
        let shape = square_shape(1.0);
        let s = IdealState { positions: shape.clone(), velocities: alloc::vec![Vec2::zeros(); 4] };
        let out = model.simulate(s, 0.01, 1.0).unwrap();
        let last = &out.last().unwrap().1;
        for (p, q) in last.positions.iter().zip(&shape) {
            assert!((p - q).norm() < 1e-15);
        }
        assert_eq!(out.len(), 101);
    }

    #[test]
    fn spinning_trajectory_stays_on_the_circle() {
        let spec = square_formation_spec();
        let shape = square_shape(1.0);
        let basis = MotionBasis::new(&spec, &shape).unwrap();
        let ar = &basis.rotation * 0.2;
        let p = designed_trajectory(&spec, &ar, &shape, core::f64::consts::PI / 0.2, 2000);
        // half a turn
        for (p, q) in p.iter().zip(&shape) {
            assert_relative_eq!(*p, -q, epsilon = 1e-9);
        }
    }
}
