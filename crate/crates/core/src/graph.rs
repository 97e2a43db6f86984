//! Rigidity graph, incidence matrix and the per-edge distance signals.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::math::sqrt;
use crate::{Error, Result, Vec2};

/// Separations at or below this are treated as coincident agents [m].
pub const COINCIDENT_EPSILON: f64 = 1e-6;

/// Default damping gain `c1` [1/s].
pub const DEFAULT_GAIN_DAMPING: f64 = 0.17;
/// Default shape gain `c2` [1/s² per metre of error].
pub const DEFAULT_GAIN_SHAPE: f64 = 0.55;

/// Undirected graph with an ordered, oriented edge list.
///
/// Column `k` of the incidence matrix has `+1` at the tail of edge `k` and
/// `-1` at its head, so `z_k = p_tail - p_head`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    incidence: DMatrix<f64>,
}

impl FormationGraph {
    /// Builds the graph from `(tail, head)` pairs. The graph must be connected.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no vertices"));
        }
        let mut incidence = DMatrix::zeros(n, edges.len());
        for (k, &(tail, head)) in edges.iter().enumerate() {
            if tail >= n || head >= n {
                return Err(Error::InvalidGraph("edge endpoint out of range"));
            }
            if tail == head {
                return Err(Error::InvalidGraph("self loop"));
            }
            incidence[(tail, k)] = 1.0;
            incidence[(head, k)] = -1.0;
        }
        let graph = Self {
            n,
            edges,
            incidence,
        };
        if !graph.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected"));
        }
        Ok(graph)
    }

    /// Reads the edge list back out of an incidence matrix.
    pub fn from_incidence(incidence: &DMatrix<f64>) -> Result<Self> {
        let mut edges = Vec::with_capacity(incidence.ncols());
        for col in incidence.column_iter() {
            let mut tail = None;
            let mut head = None;
            for (row, &b) in col.iter().enumerate() {
                match b {
                    b if b == 1.0 && tail.is_none() => tail = Some(row),
                    b if b == -1.0 && head.is_none() => head = Some(row),
                    0.0 => {}
                    _ => return Err(Error::InvalidGraph("malformed incidence column")),
                }
            }
            match (tail, head) {
                (Some(t), Some(h)) => edges.push((t, h)),
                _ => return Err(Error::InvalidGraph("malformed incidence column")),
            }
        }
        Self::new(incidence.nrows(), edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn incidence(&self) -> &DMatrix<f64> {
        &self.incidence
    }

    /// Edges touching vertex `i`, with the incidence sign of `i` on each.
    pub fn incident_edges(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter_map(move |(k, &(t, h))| match i {
                _ if i == t => Some((k, 1.0)),
                _ if i == h => Some((k, -1.0)),
                _ => None,
            })
    }

    /// Neighbour set of `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(t, h)| match i {
            _ if i == t => Some(h),
            _ if i == h => Some(t),
            _ => None,
        })
    }

    /// Same graph with the orientation of edge `k` reversed.
    pub fn with_flipped_edge(&self, k: usize) -> Self {
        let mut edges = self.edges.clone();
        let (t, h) = edges[k];
        edges[k] = (h, t);
        let mut incidence = self.incidence.clone();
        incidence.column_mut(k).neg_mut();
        Self {
            n: self.n,
            edges,
            incidence,
        }
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for w in self.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Graph plus desired distances and the two guidance gains.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    pub graph: FormationGraph,
    /// Desired distance per edge, `d` [m].
    pub desired_distances: Vec<f64>,
    /// Velocity damping `c1` [1/s].
    pub gain_damping: f64,
    /// Distance-error gain `c2` [1/s²].
    pub gain_shape: f64,
}

impl FormationSpec {
    pub fn new(
        graph: FormationGraph,
        desired_distances: Vec<f64>,
        gain_damping: f64,
        gain_shape: f64,
    ) -> Result<Self> {
        if desired_distances.len() != graph.edge_count() {
            return Err(Error::DimensionMismatch {
                what: "desired distances",
                expected: graph.edge_count(),
                found: desired_distances.len(),
            });
        }
        if desired_distances.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidParameter {
                name: "desired_distances",
                reason: "every desired distance must be positive",
            });
        }
        if !(gain_damping > 0.0) {
            return Err(Error::InvalidParameter {
                name: "gain_damping",
                reason: "must be positive",
            });
        }
        if !(gain_shape > 0.0) {
            return Err(Error::InvalidParameter {
                name: "gain_shape",
                reason: "must be positive",
            });
        }
        Ok(Self {
            graph,
            desired_distances,
            gain_damping,
            gain_shape,
        })
    }

    /// Builds a spec whose desired distances are those of `shape`.
    pub fn from_shape(
        graph: FormationGraph,
        shape: &[Vec2],
        gain_damping: f64,
        gain_shape: f64,
    ) -> Result<Self> {
        check_len("shape", graph.vertex_count(), shape.len())?;
        let d = graph
            .edges()
            .iter()
            .map(|&(t, h)| (shape[t] - shape[h]).norm())
            .collect();
        Self::new(graph, d, gain_damping, gain_shape)
    }

    pub fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }
}

/// Sensed relative positions of every edge and the derived distance errors.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeState {
    /// `z_k = p_tail - p_head` [m].
    pub z: Vec<Vec2>,
    /// `‖z_k‖` [m].
    pub norms: Vec<f64>,
    /// `e_k = ‖z_k‖ - d_k` [m].
    pub errors: Vec<f64>,
}

impl RelativeState {
    /// Unit vector of edge `k`.
    pub fn unit(&self, k: usize) -> Vec2 {
        self.z[k] / self.norms[k]
    }

    pub fn max_abs_error(&self) -> f64 {
        self.errors.iter().fold(0.0, |m, e| f64::max(m, e.abs()))
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

pub fn relative_positions(spec: &FormationSpec, positions: &[Vec2]) -> Result<RelativeState> {
    check_len("positions", spec.vertex_count(), positions.len())?;
    let m = spec.edge_count();
    let mut z = Vec::with_capacity(m);
    let mut norms = Vec::with_capacity(m);
    let mut errors = Vec::with_capacity(m);
    for (k, &(t, h)) in spec.graph.edges().iter().enumerate() {
        let zk = positions[t] - positions[h];
        let norm = zk.norm();
        if norm <= COINCIDENT_EPSILON {
            return Err(Error::CoincidentAgents {
                edge: k,
                separation: norm,
            });
        }
        z.push(zk);
        norms.push(norm);
        errors.push(norm - spec.desired_distances[k]);
    }
    Ok(RelativeState { z, norms, errors })
}

/// `(Bᵀ ⊗ I₂) p` evaluated as a matrix product on stacked coordinates.
pub fn stacked_relative_positions(graph: &FormationGraph, positions: &[Vec2]) -> Result<DVector<f64>> {
    check_len("positions", graph.vertex_count(), positions.len())?;
    let p = stack(positions);
    let b_bar = graph
        .incidence()
        .transpose()
        .kronecker(&DMatrix::<f64>::identity(2, 2));
    Ok(b_bar * p)
}

pub(crate) fn stack(vectors: &[Vec2]) -> DVector<f64> {
    DVector::from_iterator(2 * vectors.len(), vectors.iter().flat_map(|v| [v.x, v.y]))
}

pub(crate) fn unstack(v: &DVector<f64>) -> Vec<Vec2> {
    v.as_slice()
        .chunks_exact(2)
        .map(|c| Vec2::new(c[0], c[1]))
        .collect()
}

/// Four vehicles on a square with both diagonals.
///
/// Edges, in column order: (1,2) right side, (2,4) diagonal, (3,4) left side,
/// (1,4) top side, (1,3) diagonal, (2,3) bottom side (vertices 1-based here,
/// 0-based in the returned graph).
pub fn square_graph() -> FormationGraph {
    FormationGraph::new(4, vec![(0, 1), (1, 3), (2, 3), (0, 3), (0, 2), (1, 2)])
        .expect("square graph is valid")
}

/// Body-frame vertex positions of a square of the given side centred at the origin.
///
/// Vertex 1 is top-right, 2 bottom-right, 3 bottom-left, 4 top-left.
pub fn square_shape(side: f64) -> Vec<Vec2> {
    let h = 0.5 * side;
    vec![
        Vec2::new(h, h),
        Vec2::new(h, -h),
        Vec2::new(-h, -h),
        Vec2::new(-h, h),
    ]
}

/// Unit-side square with the default gains.
pub fn square_formation_spec() -> FormationSpec {
    let s2 = sqrt(2.0);
    FormationSpec::new(
        square_graph(),
        vec![1.0, s2, 1.0, 1.0, s2, 1.0],
        DEFAULT_GAIN_DAMPING,
        DEFAULT_GAIN_SHAPE,
    )
    .expect("square spec is valid")
}

/// `V = c1/2 Σ‖v_i‖² + c2/2 Σ e_k²`.
pub fn potential_energy(spec: &FormationSpec, positions: &[Vec2], velocities: &[Vec2]) -> Result<f64> {
    check_len("velocities", spec.vertex_count(), velocities.len())?;
    let rel = relative_positions(spec, positions)?;
    let kinetic: f64 = velocities.iter().map(|v| v.norm_squared()).sum();
    let shape: f64 = rel.errors.iter().map(|e| e * e).sum();
    Ok(0.5 * spec.gain_damping * kinetic + 0.5 * spec.gain_shape * shape)
}

/// `½ Σ‖v_i‖² + c2/2 Σ e_k²`, the energy dissipated by the undisturbed law for any `c1 > 0`.
pub fn mechanical_energy(spec: &FormationSpec, positions: &[Vec2], velocities: &[Vec2]) -> Result<f64> {
    check_len("velocities", spec.vertex_count(), velocities.len())?;
    let rel = relative_positions(spec, positions)?;
    let kinetic: f64 = velocities.iter().map(|v| v.norm_squared()).sum();
    let shape: f64 = rel.errors.iter().map(|e| e * e).sum();
    Ok(0.5 * kinetic + 0.5 * spec.gain_shape * shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_square() -> Vec<Vec2> {
        vec![
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn square_incidence_matches_printed_rows() {
        let b = square_formation_spec().graph.incidence().clone();
        let row = |i: usize| -> Vec<f64> { b.row(i).iter().copied().collect() };
        assert_eq!(row(0), vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(row(1), vec![-1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(row(2), vec![0.0, 0.0, 1.0, 0.0, -1.0, -1.0]);
        assert_eq!(row(3), vec![0.0, -1.0, -1.0, -1.0, 0.0, 0.0]);
        for col in b.column_iter() {
            assert_eq!(col.sum(), 0.0);
        }
    }

    #[test]
    fn incidence_round_trips_through_edge_list() {
        let g = square_graph();
        assert_eq!(FormationGraph::from_incidence(g.incidence()).unwrap(), g);
    }

    #[test]
    fn unit_square_has_zero_error() {
        let spec = square_formation_spec();
        let rel = relative_positions(&spec, &unit_square()).unwrap();
        for e in &rel.errors {
            assert_relative_eq!(*e, 0.0, epsilon = 1e-15);
        }
        // edge 1 is the right side: p1 - p2 = (0, 1)
        assert_eq!(rel.z[0], Vec2::new(0.0, 1.0));
    }

    #[test]
    fn doubled_square_errors_equal_desired_distances() {
        let spec = square_formation_spec();
        let p: Vec<Vec2> = unit_square().iter().map(|p| p * 2.0).collect();
        let rel = relative_positions(&spec, &p).unwrap();
        for (e, d) in rel.errors.iter().zip(&spec.desired_distances) {
            assert_relative_eq!(e, d, epsilon = 1e-12);
        }
    }

    #[test]
    fn coincident_neighbours_are_rejected() {
        let spec = square_formation_spec();
        let mut p = unit_square();
        p[1] = p[0] + Vec2::new(1e-7, 0.0);
        assert!(matches!(
            relative_positions(&spec, &p),
            Err(Error::CoincidentAgents { edge: 0, .. })
        ));
    }

    #[test]
    fn disconnected_and_malformed_graphs_fail() {
        assert!(FormationGraph::new(3, vec![(0, 1)]).is_err());
        assert!(FormationGraph::new(2, vec![(0, 0)]).is_err());
        assert!(FormationGraph::new(2, vec![(0, 2)]).is_err());
        let bad = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(FormationGraph::from_incidence(&bad).is_err());
    }

    #[test]
    fn spec_rejects_bad_parameters() {
        let g = square_graph();
        assert!(FormationSpec::new(g.clone(), vec![1.0; 5], 0.17, 0.55).is_err());
        assert!(FormationSpec::new(g.clone(), vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0], 0.17, 0.55).is_err());
        assert!(FormationSpec::new(g.clone(), vec![1.0; 6], 0.0, 0.55).is_err());
        assert!(FormationSpec::new(g, vec![1.0; 6], 0.17, -1.0).is_err());
    }

    #[test]
    fn potential_energy_examples() {
        let spec = square_formation_spec();
        let zero = vec![Vec2::zeros(); 4];
        assert_eq!(potential_energy(&spec, &unit_square(), &zero).unwrap(), 0.0);

        let two = FormationSpec::new(
            FormationGraph::new(2, vec![(0, 1)]).unwrap(),
            vec![1.0],
            0.17,
            0.55,
        )
        .unwrap();
        let p = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0)];
        let v = [Vec2::zeros(); 2];
        assert_relative_eq!(potential_energy(&two, &p, &v).unwrap(), 0.275, epsilon = 1e-15);
    }

    #[test]
    fn from_shape_recovers_square_distances() {
        let spec = FormationSpec::from_shape(square_graph(), &square_shape(1.0), 0.17, 0.55).unwrap();
        for (a, b) in spec
            .desired_distances
            .iter()
            .zip(&square_formation_spec().desired_distances)
        {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }
}
