use std::f64::consts::TAU;

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use tonelli::geometry::{build_torus, Vector};
use tonelli::models::{
    check_tonelli, Lagrangian, LagrangianModel, PolynomialLagrangian, Potential, SampleSpec,
};
use tonelli::modification::{build_lagrangian_modification, LagrangianModification, Psi};

const R: f64 = 2.0;

fn modified() -> &'static (Lagrangian, LagrangianModification) {
    static CELL: OnceLock<(Lagrangian, LagrangianModification)> = OnceLock::new();
    CELL.get_or_init(|| {
        let l: Lagrangian = Arc::new(PolynomialLagrangian::quartic(
            build_torus(2).unwrap(),
            0.25,
            0.5,
            Potential::Cos2 { epsilon: 0.1 },
        ));
        let spec = SampleSpec::coarse(10.0);
        let c1 = check_tonelli(l.as_ref(), &spec).unwrap().c1();
        let m = build_lagrangian_modification(&l, R, c1, &spec).unwrap();
        (l, m)
    })
}

fn fiber_min_eigen(l: &dyn LagrangianModel, q: &Vector, v: &Vector) -> f64 {
    l.jet(0.0, 0, q, v).d_vv.symmetric_eigen().eigenvalues.min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psi_is_monotone_and_convex(r in 0.1f64..30.0, mu in 0.01f64..10.0, x in 0.0f64..6.0) {
        let (_, d1, d2) = Psi::new(r, mu).eval(x * r * r);
        prop_assert!(d1 >= 0.0 && d2 >= 0.0);
    }

    #[test]
    fn modification_agrees_inside_and_dominates_up_to_2r(
        q0 in 0.0f64..1.0,
        q1 in 0.0f64..1.0,
        dir in 0.0f64..TAU,
        speed in 0.0f64..(2.0 * R),
    ) {
        let (l, m) = modified();
        let q = Vector::from_vec(vec![q0, q1]);
        let v = Vector::from_vec(vec![speed * dir.cos(), speed * dir.sin()]);
        let base = l.value(0.0, 0, &q, &v);
        let new = m.model.value(0.0, 0, &q, &v);
        if speed <= R {
            prop_assert_eq!(base, new);
        }
        prop_assert!(new >= base - 1e-12 * (1.0 + base.abs()));
        let gap = fiber_min_eigen(m.model.as_ref(), &q, &v) - fiber_min_eigen(l.as_ref(), &q, &v);
        prop_assert!(gap > -1e-8, "{gap}");
    }

    #[test]
    fn modification_is_uniformly_convex_and_linearly_bounded_outside(
        q0 in 0.0f64..1.0,
        q1 in 0.0f64..1.0,
        dir in 0.0f64..TAU,
        speed in (2.0 * R)..(40.0 * R),
    ) {
        let (_, m) = modified();
        let p = m.params();
        let q = Vector::from_vec(vec![q0, q1]);
        let v = Vector::from_vec(vec![speed * dir.cos(), speed * dir.sin()]);
        prop_assert!(fiber_min_eigen(m.model.as_ref(), &q, &v) >= p.mu * (1.0 - 1e-9));
        prop_assert!(m.model.value(0.0, 0, &q, &v) >= speed - p.c1);
    }
}

#[test]
fn verification_passes_and_reports_every_clause() {
    let (_, m) = modified();
    assert!(m.report.passed(), "{:?}", m.report.failures());
    assert!(m.report.clauses.len() >= 5);
    assert!(Psi::new(R, m.params().mu).joint_jump() < 1e-8);
}
