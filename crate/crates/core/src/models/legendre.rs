use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, CotangentVector, TangentVector, Variance, Vector};

use super::LagrangianModel;

const MAX_ITERATIONS: usize = 50;
const TOLERANCE: f64 = 1e-10;

/// Solves `∂ᵥL(t, x, v) = p` and returns `(v, H)` with `H = p·v − L`.
pub fn legendre(
    l: &dyn LagrangianModel,
    t: f64,
    x: &ChartPoint,
    p: &CotangentVector,
) -> Result<(TangentVector, f64)> {
    if p.variance != Variance::Cotangent || p.base.chart != x.chart {
        return Err(Error::ChartMismatch {
            point: x.chart,
            vector: p.base.chart,
        });
    }
    let (v, h) = legendre_coords(l, t, x.chart, &x.coords, &p.components, None)?;
    Ok((
        TangentVector {
            base: x.clone(),
            components: v,
            variance: Variance::Tangent,
        },
        h,
    ))
}

/// Coordinate form of [`legendre`]. Newton starts from `start` or, by
/// default, from `g⁻¹p`; steps are halved until the residual norm decreases
/// by the Armijo factor.
pub fn legendre_coords(
    l: &dyn LagrangianModel,
    t: f64,
    chart: usize,
    q: &Vector,
    p: &Vector,
    start: Option<&Vector>,
) -> Result<(Vector, f64)> {
    let tol = TOLERANCE * p.amax().max(1.0);
    let mut v = match start {
        Some(v) => v.clone(),
        None => {
            let g = l.manifold().metric(chart, q);
            g.lu().solve(p).unwrap_or_else(|| p.clone())
        }
    };
    let residual = |v: &Vector| l.first(t, chart, q, v).d_v - p;
    let mut r = residual(&v);
    let mut rn = r.norm();
    for _ in 0..MAX_ITERATIONS {
        if rn < tol {
            break;
        }
        let hess = l.jet(t, chart, q, &v).d_vv;
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&r),
            None => hess.lu().solve(&r).unwrap_or_else(|| r.clone()),
        };
        let mut alpha = 1.0;
        loop {
            let trial = &v - &step * alpha;
            let tr = residual(&trial);
            let tn = tr.norm();
            if tn <= (1.0 - 1e-4 * alpha) * rn {
                v = trial;
                r = tr;
                rn = tn;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return Err(Error::LegendreDiverged {
                    residual: rn,
                    iterations: MAX_ITERATIONS,
                });
            }
        }
    }
    if !(rn < tol) {
        return Err(Error::LegendreDiverged {
            residual: rn,
            iterations: MAX_ITERATIONS,
        });
    }
    let h = p.dot(&v) - l.value(t, chart, q, &v);
    Ok((v, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_sphere2, build_torus};
    use crate::models::expr::ExprLagrangian;
    use crate::models::{PolynomialLagrangian, Potential};

    #[test]
    fn quadratic_is_self_dual() {
        let m = build_torus(2).unwrap();
        let l = PolynomialLagrangian::mechanical(m, Potential::Zero);
        let x = ChartPoint::new(0, &[0.1, 0.2]);
        let p = CotangentVector::cotangent(x.clone(), &[3.0, 4.0]);
        let (v, h) = legendre(&l, 0.0, &x, &p).unwrap();
        assert!((&v.components - &p.components).amax() < 1e-12);
        assert!((h - 12.5).abs() < 1e-12);
    }

    #[test]
    fn quartic_matches_grid_maximum() {
        let m = build_torus(1).unwrap();
        let l = PolynomialLagrangian::quartic(m, 1.0, 0.0, Potential::Zero);
        let (v, h) = legendre_coords(
            &l,
            0.0,
            0,
            &Vector::zeros(1),
            &Vector::from_element(1, 8.0),
            None,
        )
        .unwrap();
        let grid_max = (0..=40000)
            .map(|i| {
                let v = -5.0 + i as f64 * 2.5e-4;
                8.0 * v - v.powi(4) / 4.0
            })
            .fold(f64::MIN, f64::max);
        assert!((v[0] - 2.0).abs() < 1e-10);
        assert!((h - 12.0).abs() < 1e-10);
        assert!((h - grid_max).abs() < 1e-6);
    }

    #[test]
    fn mechanical_dual_is_kinetic_plus_potential() {
        let m = build_torus(1).unwrap();
        let l = PolynomialLagrangian::mechanical(m, Potential::Cos2 { epsilon: 1.0 });
        for &(q, p) in &[(0.0, 1.0), (0.3, -2.0), (0.77, 0.5)] {
            let (_, h) = legendre_coords(
                &l,
                0.0,
                0,
                &Vector::from_element(1, q),
                &Vector::from_element(1, p),
                None,
            )
            .unwrap();
            let exact = p * p / 2.0 + (2.0 * std::f64::consts::PI * q).cos();
            let grid = (0..=20000)
                .map(|i| {
                    let v = -10.0 + i as f64 * 1e-3;
                    p * v - (v * v / 2.0 - (2.0 * std::f64::consts::PI * q).cos())
                })
                .fold(f64::MIN, f64::max);
            assert!((h - exact).abs() < 1e-12);
            assert!((h - grid).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_mismatched_base() {
        let m = build_sphere2();
        let l = PolynomialLagrangian::mechanical(m, Potential::Zero);
        let x = ChartPoint::new(0, &[0.1, 0.2]);
        let p = CotangentVector::cotangent(ChartPoint::new(1, &[0.1, 0.2]), &[1.0, 0.0]);
        assert!(matches!(
            legendre(&l, 0.0, &x, &p),
            Err(Error::ChartMismatch { .. })
        ));
    }

    #[test]
    fn unreachable_momentum_fails_to_converge() {
        let m = build_torus(1).unwrap();
        // ∂ᵥL is a sigmoid, so p = 2 is outside its range
        let l = ExprLagrangian::new(m, "log(1 + exp(v))").unwrap();
        let r = legendre_coords(
            &l,
            0.0,
            0,
            &Vector::zeros(1),
            &Vector::from_element(1, 2.0),
            None,
        );
        assert!(matches!(r, Err(Error::LegendreDiverged { .. })));
    }
}
