use proptest::prelude::*;

use tonelli::geometry::{build_torus, ChartPoint};
use tonelli::models::{LagrangianModel, PolynomialLagrangian, Potential};
use tonelli::pathspace::{BoundaryCondition, DiscretePath};
use tonelli::solver::families::{seeded_perturbation, torus_translation};
use tonelli::solver::{minimax, minimize, morse_index, SolverOptions};

fn model() -> PolynomialLagrangian {
    PolynomialLagrangian::mechanical(build_torus(2).unwrap(), Potential::Cos2 { epsilon: 0.1 })
}

#[test]
fn minimax_levels_increase_with_the_degree_of_the_family() {
    let l = model();
    let bc = BoundaryCondition::Periodic;
    let opts = SolverOptions::default();
    let mut levels = Vec::new();
    for (axes, points) in [(vec![0], 12), (vec![0, 1], 6)] {
        let fam = torus_translation(l.manifold(), &axes, 0.37, points, 16).unwrap();
        let r = minimax(&l, &bc, &fam, 32, &opts).unwrap();
        assert!(r.family_max_log.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.index_compatible);
        assert!(r.gradient.norm < opts.refine_tol);
        levels.push(r.level);
    }
    assert!(
        levels[0].abs() < 1e-9 && (levels[1] - 0.2).abs() < 1e-9,
        "{levels:?}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn descent_from_any_seed_finds_a_critical_loop(
        x in 0.0f64..1.0,
        y in 0.0f64..1.0,
        seed in 0u64..1000,
    ) {
        let l = model();
        let bc = BoundaryCondition::Periodic;
        let opts = SolverOptions::default();
        let start = DiscretePath::constant(l.manifold().clone(), 32, &ChartPoint::new(0, &[x, y])).unwrap();
        let start = seeded_perturbation(&start, seed, 0.05, true).unwrap();
        let r = minimize(&l, &bc, &start, &opts).unwrap();
        prop_assert!(r.gradient.norm < opts.refine_tol);
        prop_assert!(r.descent_log.windows(2).all(|w| w[1] <= w[0]));
        let critical = [-0.2, 0.0, 0.2];
        prop_assert!(critical.iter().any(|c| (r.gradient.action - c).abs() < 1e-8), "{}", r.gradient.action);
        let index = morse_index(&l, &bc, &r.path, &opts).unwrap();
        prop_assert!(index.m <= index.m_star && index.m_star - index.m <= 4);
        prop_assert!(index.stable);
    }
}
