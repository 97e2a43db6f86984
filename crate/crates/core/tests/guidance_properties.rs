use nalgebra::{DMatrix, Rotation2};
use proptest::prelude::*;
use swarmlift_core::graph::{
    relative_positions, square_formation_spec, square_shape, FormationSpec,
};
use swarmlift_core::guidance::{
    designed_velocities, guidance_law, local_view, saturate, solve_disagreements, vehicle_acceleration,
    DisagreementSet,
};
use swarmlift_core::Vec2;

fn vec2() -> impl Strategy<Value = Vec2> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y)| Vec2::new(x, y))
}

fn perturbed_square() -> impl Strategy<Value = Vec<Vec2>> {
    prop::collection::vec((-0.25..0.25f64, -0.25..0.25f64), 4).prop_map(|d| {
        square_shape(1.0)
            .into_iter()
            .zip(d)
            .map(|(p, (dx, dy))| p + Vec2::new(dx, dy))
            .collect()
    })
}

fn velocities() -> impl Strategy<Value = Vec<Vec2>> {
    prop::collection::vec(vec2(), 4)
}

fn patterned(spec: &FormationSpec, values: &[f64]) -> DMatrix<f64> {
    let b = spec.graph.incidence();
    DMatrix::from_fn(b.nrows(), b.ncols(), |i, k| {
        if b[(i, k)] != 0.0 {
            values[i * b.ncols() + k]
        } else {
            0.0
        }
    })
}

fn disagreements() -> impl Strategy<Value = DisagreementSet> {
    (prop::collection::vec(-0.5..0.5f64, 24), prop::collection::vec(-0.5..0.5f64, 24)).prop_map(|(v, r)| {
        let spec = square_formation_spec();
        let rot = patterned(&spec, &r);
        DisagreementSet::new(&spec, patterned(&spec, &v) + &rot, rot).unwrap()
    })
}

fn close(a: &[Vec2], b: &[Vec2], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol * (1.0 + y.norm()))
}

proptest! {
    #[test]
    fn invariant_under_translation(p in perturbed_square(), v in velocities(), dis in disagreements(), shift in vec2()) {
        let spec = square_formation_spec();
        let moved: Vec<Vec2> = p.iter().map(|q| q + shift * 10.0).collect();
        let u = guidance_law(&spec, &relative_positions(&spec, &p).unwrap(), &v, &dis).unwrap();
        let w = guidance_law(&spec, &relative_positions(&spec, &moved).unwrap(), &v, &dis).unwrap();
        prop_assert!(close(&u, &w, 1e-12));
    }

    #[test]
    fn covariant_under_rotation(p in perturbed_square(), v in velocities(), dis in disagreements(), angle in -3.2..3.2f64) {
        let spec = square_formation_spec();
        let r = Rotation2::new(angle);
        let rp: Vec<Vec2> = p.iter().map(|q| r * q).collect();
        let rv: Vec<Vec2> = v.iter().map(|q| r * q).collect();
        let u = guidance_law(&spec, &relative_positions(&spec, &p).unwrap(), &v, &dis).unwrap();
        let w = guidance_law(&spec, &relative_positions(&spec, &rp).unwrap(), &rv, &dis).unwrap();
        let ru: Vec<Vec2> = u.iter().map(|q| r * q).collect();
        prop_assert!(close(&w, &ru, 1e-12));
    }

    #[test]
    fn saturation_bounds_each_axis_and_keeps_direction(x in -10.0..10.0f64, y in -10.0..10.0f64, limit in 0.1..3.0f64) {
        let u = Vec2::new(x, y);
        let (s, flagged) = saturate(u, limit);
        prop_assert!(s.x.abs() <= limit * (1.0 + 1e-15) && s.y.abs() <= limit * (1.0 + 1e-15));
        prop_assert!((s.x * u.y - s.y * u.x).abs() <= 1e-12 * u.norm_squared());
        prop_assert!(s.dot(&u) >= 0.0);
        prop_assert_eq!(flagged, x.abs() > limit || y.abs() > limit);
        if !flagged {
            prop_assert_eq!(s, u);
        }
    }

    #[test]
    fn solved_disagreements_reproduce_the_field(target in velocities()) {
        let spec = square_formation_spec();
        let shape = square_shape(1.0);
        let a_v = solve_disagreements(&spec, &target, &shape).unwrap();
        let got = designed_velocities(&a_v, &relative_positions(&spec, &shape).unwrap());
        prop_assert!(close(&got, &target, 1e-9));
        let b = spec.graph.incidence();
        prop_assert!(a_v.iter().zip(b.iter()).all(|(&a, &bik)| bik != 0.0 || a == 0.0));
    }

    #[test]
    fn local_views_match_the_stacked_law(p in perturbed_square(), v in velocities(), dis in disagreements()) {
        let spec = square_formation_spec();
        let rel = relative_positions(&spec, &p).unwrap();
        let stacked = guidance_law(&spec, &rel, &v, &dis).unwrap();
        for i in 0..4 {
            let view = local_view(&spec, &rel, &dis, i).unwrap();
            let local = vehicle_acceleration(spec.gain_damping, spec.gain_shape, v[i], &view).unwrap();
            prop_assert!((local - stacked[i]).norm() <= 1e-12);
        }
    }

    #[test]
    fn edge_orientation_does_not_matter(p in perturbed_square(), v in velocities(), k in 0usize..6) {
        let spec = square_formation_spec();
        let flipped = FormationSpec { graph: spec.graph.with_flipped_edge(k), ..spec.clone() };
        let zero = DisagreementSet::zero(4, 6);
        let u = guidance_law(&spec, &relative_positions(&spec, &p).unwrap(), &v, &zero).unwrap();
        let w = guidance_law(&flipped, &relative_positions(&flipped, &p).unwrap(), &v, &zero).unwrap();
        prop_assert!(close(&u, &w, 1e-12));
    }
}
