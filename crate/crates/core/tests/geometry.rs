use std::f64::consts::TAU;

use proptest::prelude::*;

use tonelli::geometry::{
    build_sphere2, build_torus, change_chart, norm, ChartPoint, FiberVector, RoundSphere,
};

fn sphere_point(theta: f64, phi: f64) -> ChartPoint {
    RoundSphere::new().from_embedding([
        theta.sin() * phi.cos(),
        theta.sin() * phi.sin(),
        theta.cos(),
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sphere_norm_is_chart_independent(
        theta in 0.3f64..2.8,
        phi in 0.0f64..TAU,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let m = build_sphere2();
        let x = sphere_point(theta, phi);
        let v = FiberVector::tangent(x.clone(), &[a, b]);
        let other = 1 - x.chart;
        let w = change_chart(m.as_ref(), &v, other).unwrap();
        let n0 = norm(m.as_ref(), &x, &v).unwrap();
        let n1 = norm(m.as_ref(), &w.base, &w).unwrap();
        prop_assert!((n0 - n1).abs() < 1e-8 * (1.0 + n0), "{n0} vs {n1}");
    }

    #[test]
    fn sphere_cotangent_norm_is_chart_independent(
        theta in 0.3f64..2.8,
        phi in 0.0f64..TAU,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let m = build_sphere2();
        let x = sphere_point(theta, phi);
        let p = FiberVector::cotangent(x.clone(), &[a, b]);
        let w = change_chart(m.as_ref(), &p, 1 - x.chart).unwrap();
        let n0 = norm(m.as_ref(), &x, &p).unwrap();
        let n1 = norm(m.as_ref(), &w.base, &w).unwrap();
        prop_assert!((n0 - n1).abs() < 1e-8 * (1.0 + n0));
    }

    #[test]
    fn unit_speed_geodesics_travel_distance_one(
        theta in 0.2f64..2.9,
        phi in 0.0f64..TAU,
        dir in 0.0f64..TAU,
    ) {
        let m = build_sphere2();
        let x = sphere_point(theta, phi);
        let g = m.metric(x.chart, &x.coords);
        let raw = tonelli::geometry::Vector::from_vec(vec![dir.cos(), dir.sin()]);
        let v = &raw / raw.dot(&(&g * &raw)).sqrt();
        let y = m.exp_map(&x, &v).unwrap();
        prop_assert!((m.distance(&x, &y) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn torus_geodesics_are_straight(
        x0 in 0.0f64..1.0,
        x1 in 0.0f64..1.0,
        v0 in -0.4f64..0.4,
        v1 in -0.4f64..0.4,
    ) {
        let m = build_torus(2).unwrap();
        let x = ChartPoint::new(0, &[x0, x1]);
        let v = tonelli::geometry::Vector::from_vec(vec![v0, v1]);
        let y = m.exp_map(&x, &v).unwrap();
        let d = m.displacement(&x, &y);
        prop_assert!((d - &v).amax() < 1e-12);
        prop_assert!((m.distance(&x, &y) - v.norm()).abs() < 1e-12);
    }
}

#[test]
fn charts_agree_after_rebasing_far_points() {
    let m = build_sphere2();
    let far = ChartPoint::new(0, &[5.0, -3.0]);
    let y = m.rebase(&far).unwrap();
    assert_eq!(y.chart, 1);
    assert!(m.distance(&far, &y) < 1e-12);
}
