use proptest::prelude::*;

use tonelli::dynamics::{
    certify_solution, estimate_r_a, integrate, Flow, FlowState, GridSpec, IntegratorOptions,
};
use tonelli::geometry::{build_sphere2, build_torus, ChartPoint};
use tonelli::models::{PolynomialLagrangian, Potential};
use tonelli::pathspace::DiscretePath;

fn small_grid() -> GridSpec {
    GridSpec {
        points_per_dim: 3,
        directions: 4,
        speed_levels: 2,
        time_grid: 3,
        ..GridSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_then_backward_returns(
        q0 in -0.8f64..0.8,
        q1 in -0.8f64..0.8,
        v0 in -2.0f64..2.0,
        v1 in -2.0f64..2.0,
    ) {
        let l = PolynomialLagrangian::mechanical(build_sphere2(), Potential::Height { epsilon: 0.4 });
        let tol = 1e-10;
        let opts = IntegratorOptions::with_tol(tol);
        let start = FlowState::new(0.0, ChartPoint::new(0, &[q0, q1]), &[v0, v1]);
        let fwd = integrate(&l, &start, 1.0, &opts).unwrap();
        let back = integrate(&l, fwd.last(), 0.0, &opts).unwrap();
        let end = back.last();
        let m = build_sphere2();
        prop_assert!(m.distance(&end.q, &start.q) < 100.0 * tol);
        let flow = Flow::Lagrangian(&l);
        prop_assert!((flow.fiber_size(end) - flow.fiber_size(&start)).abs() < 100.0 * tol * (1.0 + v0.abs() + v1.abs()));
    }

    #[test]
    fn energy_is_conserved_by_autonomous_flows(
        q0 in 0.0f64..1.0,
        q1 in 0.0f64..1.0,
        v0 in -3.0f64..3.0,
        v1 in -3.0f64..3.0,
    ) {
        let l = PolynomialLagrangian::quartic(build_torus(2).unwrap(), 0.25, 0.5, Potential::Cos2 { epsilon: 0.2 });
        let traj = integrate(&l, &FlowState::new(0.0, ChartPoint::new(0, &[q0, q1]), &[v0, v1]), 1.0, &IntegratorOptions::with_tol(1e-11)).unwrap();
        let flow = Flow::Lagrangian(&l);
        let e0 = flow.invariant(&traj.states[0]);
        for s in &traj.states {
            prop_assert!((flow.invariant(s) - e0).abs() < 1e-8);
        }
    }
}

#[test]
fn free_particle_speed_bound_is_the_seed_radius_with_margin() {
    let l = PolynomialLagrangian::mechanical(build_torus(2).unwrap(), Potential::Zero);
    let est = estimate_r_a(&l, 2.0, 0.5, &small_grid()).unwrap();
    assert!((est.r_a - 3.0).abs() < 1e-9, "{}", est.r_a);
}

#[test]
fn reachable_radius_grows_with_the_action_bound() {
    let l =
        PolynomialLagrangian::mechanical(build_torus(2).unwrap(), Potential::Cos2 { epsilon: 0.5 });
    let grid = small_grid();
    let radii: Vec<f64> = [0.0, 1.0, 3.0]
        .iter()
        .map(|&a| estimate_r_a(&l, a, 0.7, &grid).unwrap().r_a)
        .collect();
    assert!(radii.windows(2).all(|w| w[1] >= w[0]), "{radii:?}");
    for (a, r) in [0.0, 1.0, 3.0].iter().zip(&radii) {
        assert!(*r >= a + 0.7);
    }
}

#[test]
fn constant_paths_are_always_certified() {
    let l =
        PolynomialLagrangian::mechanical(build_torus(2).unwrap(), Potential::Cos2 { epsilon: 0.1 });
    let path = DiscretePath::constant(build_torus(2).unwrap(), 8, &ChartPoint::new(0, &[0.5, 0.5]))
        .unwrap();
    let cert = certify_solution(&l, &l, &path, 0.1, 0.2);
    assert!(cert.certified());
    assert_eq!(cert.max_speed, 0.0);
    assert_eq!(cert.action_gap, 0.0);
}
