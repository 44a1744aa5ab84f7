//! Property suite: invariant checks of every stage on the builtin models,
//! each returning a verdict instead of panicking.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    certify_solution, hamiltonian_integrate, integrate, Flow, FlowState, IntegratorOptions,
};
use crate::geometry::{
    build_sphere2, build_torus, change_chart, cofiber_norm, ChartPoint, FiberVector, Manifold,
    RoundSphere, Vector,
};
use crate::models::expr::ExprHamiltonian;
use crate::models::legendre::legendre_coords;
use crate::models::{
    action_integrand, check_tonelli, FenchelDual, Hamiltonian, Lagrangian, LagrangianModel,
    MechanicalHamiltonian, PolynomialLagrangian, Potential, SampleSpec,
};
use crate::modification::{
    build_hamiltonian_modification, build_lagrangian_modification, verify_lagrangian_modification,
    Psi,
};
use crate::pathspace::{
    action, gradient, hessian, holder_bound_check, BoundaryCondition, DiscretePath, VariationSpace,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteCheck {
    pub name: String,
    pub passed: bool,
    /// Observed value compared against `threshold`.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &str, f: impl FnOnce() -> (bool, f64, f64, String)) -> SuiteCheck {
    let start = Instant::now();
    let (passed, value, threshold, detail) = f();
    SuiteCheck {
        name: name.into(),
        passed,
        value,
        threshold,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn failed(e: impl std::fmt::Display) -> (bool, f64, f64, String) {
    (false, f64::NAN, f64::NAN, e.to_string())
}

fn mechanical_torus(eps: f64) -> Lagrangian {
    Arc::new(PolynomialLagrangian::mechanical(
        build_torus(2).expect("torus2"),
        Potential::Cos2 { epsilon: eps },
    ))
}

fn quartic_torus() -> Lagrangian {
    Arc::new(PolynomialLagrangian::quartic(
        build_torus(2).expect("torus2"),
        1.0,
        1.0,
        Potential::Cos2 { epsilon: 0.1 },
    ))
}

fn height_sphere() -> Lagrangian {
    Arc::new(PolynomialLagrangian::mechanical(
        build_sphere2(),
        Potential::Height { epsilon: 0.4 },
    ))
}

/// Smooth random path with a few Fourier modes.
pub fn random_path(m: &Manifold, segments: usize, rng: &mut ChaCha8Rng) -> DiscretePath {
    if m.name() == "sphere2" {
        let sphere = RoundSphere::new();
        let c: Vec<f64> = (0..9).map(|_| rng.random_range(-0.6..0.6)).collect();
        return DiscretePath::from_fn(m.clone(), segments, |t| {
            let s = 2.0 * std::f64::consts::PI * t;
            let p = [
                c[0] + c[1] * s.sin() + c[2] * (2.0 * s).cos() + 0.3,
                c[3] + c[4] * s.cos() + c[5] * (2.0 * s).sin(),
                1.0 + c[6] * s.sin() + c[7] * s.cos() + c[8] * t,
            ];
            let n = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            sphere.from_embedding(p.map(|x| x / n))
        })
        .expect("smooth sphere path");
    }
    let n = m.dim();
    let base: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let drift: Vec<f64> = (0..n).map(|_| rng.random_range(-0.8..0.8)).collect();
    let modes: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)])
        .collect();
    DiscretePath::from_fn(m.clone(), segments, |t| {
        let s = 2.0 * std::f64::consts::PI * t;
        let q: Vec<f64> = (0..n)
            .map(|i| base[i] + drift[i] * t + modes[i][0] * s.sin() + modes[i][1] * (2.0 * s).sin())
            .collect();
        ChartPoint::new(0, &q)
    })
    .expect("smooth torus path")
}

/// Least-squares slope of `log err` against `log h`.
fn observed_order(hs: &[f64], errs: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(errs)
        .filter(|(_, e)| **e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

const STEPS: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];

/// Observed orders of the one-sided difference quotients of the action
/// (against the gradient) and of the gradient (against the Hessian) along
/// a random direction, for one path.
pub fn quotient_orders(
    l: &dyn LagrangianModel,
    path: &DiscretePath,
    rng: &mut ChaCha8Rng,
) -> crate::Result<(f64, f64)> {
    // all nodes free: the unconstrained node system
    let bc = BoundaryCondition::Neumann;
    let space = VariationSpace::new(&bc, path);
    let z = Vector::from_fn(space.dim(), |_, _| rng.random_range(-1.0..1.0));
    let z = &z / z.norm();
    let g0 = gradient(l, path, &bc)?;
    let h0 = hessian(l, path, &bc)?;
    let slope = g0.dual.dot(&z);
    let curvature = &h0 * &z;
    let mut e1 = Vec::new();
    let mut e2 = Vec::new();
    for &h in &STEPS {
        let moved = path.displaced(&space.expand(&(&z * h)), |_| false)?;
        e1.push(((action(l, &moved)? - g0.action) / h - slope).abs());
        let g1 = gradient(l, &moved, &bc)?;
        e2.push(((&g1.dual - &g0.dual) / h - &curvature).amax());
    }
    Ok((observed_order(&STEPS, &e1), observed_order(&STEPS, &e2)))
}

/// Gradient and Hessian difference quotients on 5 random paths of each of
/// three models.
pub fn difference_quotients() -> Vec<SuiteCheck> {
    let models = [mechanical_torus(0.1), quartic_torus(), height_sphere()];
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = (f64::INFINITY, f64::INFINITY);
    let mut error = None;
    for l in &models {
        for _ in 0..5 {
            let path = random_path(l.manifold(), 32, &mut rng);
            match quotient_orders(l.as_ref(), &path, &mut rng) {
                Ok((a, b)) => worst = (worst.0.min(a), worst.1.min(b)),
                Err(e) => error = Some(e.to_string()),
            }
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let make = |name: &str, order: f64| SuiteCheck {
        name: name.into(),
        passed: error.is_none() && order >= 0.9,
        value: order,
        threshold: 0.9,
        detail: error.clone().unwrap_or_else(|| {
            format!("worst observed order over 15 paths, h = 1e-3..1e-6: {order:.3}")
        }),
        seconds,
    };
    vec![
        make("action difference quotients", worst.0),
        make("hessian difference quotients", worst.1),
    ]
}

/// Sampled checks of every modification clause for the given radius on the
/// mechanical and quartic torus models.
pub fn lagrangian_modification(r: f64) -> SuiteCheck {
    timed(&format!("lagrangian modification R = {r}"), || {
        let spec = SampleSpec::coarse(10.0);
        let mut notes = Vec::new();
        let mut worst = f64::INFINITY;
        for l in [mechanical_torus(0.1), quartic_torus()] {
            let c1 = match check_tonelli(l.as_ref(), &spec) {
                Ok(t) => t.c1(),
                Err(e) => return failed(e),
            };
            match build_lagrangian_modification(&l, r, c1, &spec) {
                Ok(m) => {
                    for c in &m.report.clauses {
                        worst = worst.min(c.margin);
                    }
                    if !m.report.passed() {
                        notes.push(m.report.failures().join(", "));
                    }
                }
                Err(e) => notes.push(e.to_string()),
            }
        }
        let joints = Psi::new(r, 1.0).joint_jump();
        if joints >= 1e-8 {
            notes.push(format!("psi joint jump {joints:e}"));
        }
        let detail = if notes.is_empty() {
            format!("all clauses pass; worst margin {worst:.3e}; psi joint jump {joints:.1e}")
        } else {
            notes.join("; ")
        };
        (notes.is_empty(), worst, 0.0, detail)
    })
}

/// A modification with a concave dent in `ψ` must be caught.
pub fn corrupted_psi_detected() -> SuiteCheck {
    timed("corrupted psi detected", || {
        let spec = SampleSpec::coarse(10.0);
        let l = mechanical_torus(0.1);
        let c1 = match check_tonelli(l.as_ref(), &spec) {
            Ok(t) => t.c1(),
            Err(e) => return failed(e),
        };
        let m = match build_lagrangian_modification(&l, 2.0, c1, &spec) {
            Ok(m) => m,
            Err(e) => return failed(e),
        };
        let report = verify_lagrangian_modification(&m.with_corrupted_psi(1.0), &spec);
        let f = report.failures();
        (
            !f.is_empty(),
            f.len() as f64,
            1.0,
            format!("flagged: {}", f.join(", ")),
        )
    })
}

/// Certificates: a path faster than `R` must come out UNCERTIFIED, the
/// same path under a large enough bound CERTIFIED.
pub fn certification_fixture() -> SuiteCheck {
    timed("certification fixture", || {
        let m = build_sphere2();
        let l = PolynomialLagrangian::mechanical(m.clone(), Potential::Zero);
        let sphere = RoundSphere::new();
        // the long great-circle arc between two points at distance 1
        let len = 2.0 * std::f64::consts::PI - 1.0;
        let path = match DiscretePath::from_fn(m, 128, |t| {
            let s = -0.5 - len * t;
            sphere.from_embedding([s.sin(), 0.0, s.cos()])
        }) {
            Ok(p) => p,
            Err(e) => return failed(e),
        };
        let slow = certify_solution(&l, &l, &path, 4.0, 5.0);
        let fast = certify_solution(&l, &l, &path, 6.0, 8.0);
        let ok = !slow.certified() && slow.witness_segment.is_some() && fast.certified();
        (
            ok,
            slow.max_speed,
            4.0,
            format!(
                "speed {:.6} against R_A = 4: {:?} (witness {:?}); against R_A = 6: {:?}",
                slow.max_speed, slow.status, slow.witness_segment, fast.status
            ),
        )
    })
}

fn random_point(m: &Manifold, rng: &mut ChaCha8Rng) -> ChartPoint {
    let n = m.dim();
    let chart = rng.random_range(0..m.charts().len());
    let lim = if m.name() == "sphere2" { 1.0 } else { 0.5 };
    let q: Vec<f64> = (0..n).map(|_| rng.random_range(-lim..lim)).collect();
    ChartPoint::new(chart, &q)
}

/// `v ↦ ∂ᵥL ↦ v` on 1000 random samples.
pub fn legendre_round_trip() -> SuiteCheck {
    timed("legendre round-trip", || {
        let models = [mechanical_torus(0.1), quartic_torus(), height_sphere()];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let l = &models[i % models.len()];
            let x = random_point(l.manifold(), &mut rng);
            let v = Vector::from_fn(x.coords.len(), |_, _| rng.random_range(-3.0..3.0));
            let t = rng.random_range(0.0..1.0);
            let p = l.first(t, x.chart, &x.coords, &v).d_v;
            match legendre_coords(l.as_ref(), t, x.chart, &x.coords, &p, None) {
                Ok((back, _)) => worst = worst.max((back - &v).amax()),
                Err(e) => return failed(e),
            }
        }
        (
            worst < 1e-8,
            worst,
            1e-8,
            format!("max |v' - v| over 1000 samples: {worst:.3e}"),
        )
    })
}

/// Euler–Lagrange flow of `L` against the Hamiltonian flow of its Fenchel
/// dual over `[0, 1]`.
pub fn flows_agree() -> SuiteCheck {
    timed("euler-lagrange vs hamiltonian flow", || {
        let m = build_sphere2();
        let l: Lagrangian = Arc::new(PolynomialLagrangian::quartic(
            m.clone(),
            1.0,
            1.0,
            Potential::Height { epsilon: 0.5 },
        ));
        let h = FenchelDual::new(l.clone());
        let opts = IntegratorOptions::with_tol(1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut worst: f64 = 0.0;
        for _ in 0..4 {
            let q = random_point(&m, &mut rng);
            let v = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let p = l.first(0.0, q.chart, &q.coords, &v).d_v;
            let el = integrate(
                l.as_ref(),
                &FlowState {
                    t: 0.0,
                    q: q.clone(),
                    w: v,
                },
                1.0,
                &opts,
            );
            let hm = hamiltonian_integrate(&h, &FlowState { t: 0.0, q, w: p }, 1.0, &opts);
            let (el, hm) = match (el, hm) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return failed(e),
            };
            let (a, b) = (el.last(), hm.last());
            let pa = l.first(1.0, a.q.chart, &a.q.coords, &a.w).d_v;
            let pb = match change_chart(
                m.as_ref(),
                &FiberVector::cotangent(b.q.clone(), b.w.as_slice()),
                a.q.chart,
            ) {
                Ok(c) => c.components,
                Err(e) => return failed(e),
            };
            worst = worst
                .max(m.distance(&a.q, &b.q))
                .max((pa - pb).amax())
                .max((el.total_action() - hm.total_action()).abs());
        }
        (
            worst < 1e-6,
            worst,
            1e-6,
            format!("max position/momentum/action discrepancy at t = 1: {worst:.3e}"),
        )
    })
}

/// Energy of autonomous flows over `[0, 1]` at the default tolerance.
pub fn energy_drift() -> SuiteCheck {
    timed("autonomous energy drift", || {
        let models = [mechanical_torus(0.1), quartic_torus(), height_sphere()];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for l in &models {
            for _ in 0..3 {
                let q = random_point(l.manifold(), &mut rng);
                let v = Vector::from_fn(q.coords.len(), |_, _| rng.random_range(-2.0..2.0));
                let traj = match integrate(
                    l.as_ref(),
                    &FlowState { t: 0.0, q, w: v },
                    1.0,
                    &IntegratorOptions::with_tol(1e-11),
                ) {
                    Ok(t) => t,
                    Err(e) => return failed(e),
                };
                let flow = Flow::Lagrangian(l.as_ref());
                let e0 = flow.invariant(&traj.states[0]);
                for s in &traj.states {
                    worst = worst.max((flow.invariant(s) - e0).abs());
                }
            }
        }
        (
            worst < 1e-8,
            worst,
            1e-8,
            format!("max |E(t) - E(0)|: {worst:.3e}"),
        )
    })
}

/// `g′(s)s − g(s)` equals the action integrand along rays `p = s p̂`.
pub fn radial_identity() -> SuiteCheck {
    timed("radial action-integrand identity", || {
        let torus = build_torus(2).expect("torus2");
        let models: Vec<Hamiltonian> = vec![
            Arc::new(MechanicalHamiltonian::new(
                build_sphere2(),
                Potential::Height { epsilon: 0.4 },
            )),
            Arc::new(FenchelDual::new(quartic_torus())),
            match ExprHamiltonian::shared(
                torus,
                "(p0^2 + p1^2)^2/4 + (p0^2 + p1^2)/2 + sin(2*pi*q0)*p0",
            ) {
                Ok(h) => h,
                Err(e) => return failed(e),
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut worst: f64 = 0.0;
        for h in &models {
            let x = random_point(h.manifold(), &mut rng);
            let dir = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let dir = &dir / cofiber_norm(&h.manifold().metric(x.chart, &x.coords), &dir);
            let g = |s: f64| h.value(0.3, x.chart, &x.coords, &(&dir * s));
            for i in 1..=20 {
                let s = 0.25 * i as f64;
                let e = 1e-5 * s;
                let gp = (g(s + e) - g(s - e)) / (2.0 * e);
                let f = action_integrand(h.as_ref(), 0.3, x.chart, &x.coords, &(&dir * s));
                worst = worst.max((gp * s - g(s) - f).abs() / (1.0 + f.abs()));
            }
        }
        (
            worst < 1e-5,
            worst,
            1e-5,
            format!("max relative residual over 60 radial samples: {worst:.3e}"),
        )
    })
}

/// Quadratic modification of `H = |p|²/2 + cos(2πq)` on the circle.
pub fn hamiltonian_modification() -> SuiteCheck {
    timed("hamiltonian modification R = 5", || {
        let h =
            match ExprHamiltonian::shared(build_torus(1).expect("torus1"), "p0^2/2 + cos(2*pi*q0)")
            {
                Ok(h) => h,
                Err(e) => return failed(e),
            };
        let spec = SampleSpec::coarse(10.0);
        match build_hamiltonian_modification(&h, 5.0, None, None, &spec) {
            Ok(m) => {
                let coercive = m
                    .report
                    .clauses
                    .iter()
                    .find(|c| c.clause.starts_with("c:"))
                    .map_or(f64::NAN, |c| c.margin);
                let ok = m.report.passed() && coercive >= 0.0;
                let detail = if ok {
                    format!("clauses (a)-(d) pass; action-integrand margin {coercive:.3e}")
                } else {
                    m.report.failures().join(", ")
                };
                (ok, coercive, 0.0, detail)
            }
            Err(e) => failed(e),
        }
    })
}

/// `|∂ᵥL₀| ≤ ℓ₂(1 + |v|)`: the sampled ratio stops growing once the
/// quadratic tail is reached.
pub fn fiber_derivative_growth() -> SuiteCheck {
    timed("linear growth of the fiber derivative", || {
        let spec = SampleSpec::coarse(10.0);
        let mut worst: f64 = 0.0;
        for l in [mechanical_torus(0.1), quartic_torus()] {
            let c1 = match check_tonelli(l.as_ref(), &spec) {
                Ok(t) => t.c1(),
                Err(e) => return failed(e),
            };
            let m = match build_lagrangian_modification(&l, 2.0, c1, &spec) {
                Ok(m) => m,
                Err(e) => return failed(e),
            };
            let l0 = m.lagrangian();
            let shell = |speed: f64| {
                SampleSpec {
                    v_max: speed,
                    ..spec.clone()
                }
                .tangent_samples(l0.manifold(), l0.autonomous())
                .iter()
                .map(|s| {
                    let g = l0.manifold().metric(s.chart, &s.q);
                    cofiber_norm(&g, &l0.first(s.t, s.chart, &s.q, &s.w).d_v) / (1.0 + s.speed)
                })
                .fold(0.0, f64::max)
            };
            let v = 20.0 * m.params().r;
            worst = worst.max(shell(2.0 * v) / shell(v));
        }
        (
            worst <= 1.05,
            worst,
            1.05,
            format!(
                "sup |d_v L0|/(1+|v|) grows by a factor {worst:.4} from |v| <= 40R to |v| <= 80R"
            ),
        )
    })
}

/// Hölder bound `dist(γ(s), γ(t)) ≤ |t−s|^{1/2} ‖γ′‖_{L²}` on random paths.
pub fn holder_bound() -> SuiteCheck {
    timed("holder bound", || {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut worst: f64 = 0.0;
        let mut holds = true;
        for m in [build_torus(2).expect("torus2"), build_sphere2()] {
            for _ in 0..5 {
                let r = holder_bound_check(&random_path(&m, 32, &mut rng));
                holds &= r.holds;
                worst = worst.max(r.worst_ratio);
            }
        }
        (holds, worst, 1.0, format!("worst ratio {worst:.4}"))
    })
}

/// Runs every check.
pub fn property_suite() -> Vec<SuiteCheck> {
    let mut out = difference_quotients();
    for r in [1.0, 5.0, 20.0] {
        out.push(lagrangian_modification(r));
    }
    out.push(corrupted_psi_detected());
    out.push(certification_fixture());
    out.push(legendre_round_trip());
    out.push(flows_agree());
    out.push(energy_drift());
    out.push(radial_identity());
    out.push(hamiltonian_modification());
    out.push(fiber_derivative_growth());
    out.push(holder_bound());
    out
}
