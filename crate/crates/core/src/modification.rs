//! Convex quadratic `R`-modification of a Lagrangian and quadratic
//! `R`-modification of a Hamiltonian.
//!
//! `L₀ = λφ(L/λ) + ψ(|v|²)`: `φ` is the identity below 1 and constant above
//! 2, `ψ` vanishes below `R²` and equals `μs − 2μR²` above `4R²`. `ψ″` is a
//! Beta(3,6) bump of mass `μ` on `[R², 4R²]`, so `ψ` is convex by construction.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cofiber_norm, fiber_norm, Manifold, Matrix, Vector};
use crate::models::checks::{check_h1_h2, relative_eigen_range, ScalarFn};
use crate::models::hamiltonian::{action_integrand, Hamiltonian, HamiltonianModel};
use crate::models::sampling::{PhaseSample, SampleSpec};
use crate::models::{kinetic_jet, DerivativeMode, FirstJet, Jet, Lagrangian, LagrangianModel};

const SAFETY: f64 = 1.5;
const ESCALATED_SAFETY: f64 = 2.0;

/// `(φ, φ′, φ″)`. On `u = s − 1 ∈ [0,1]`, `φ′ = 1 − (6u⁵ − 15u⁴ + 10u³)`.
pub fn phi(s: f64) -> (f64, f64, f64) {
    if s <= 1.0 {
        (s, 1.0, 0.0)
    } else if s >= 2.0 {
        (1.5, 0.0, 0.0)
    } else {
        let u = s - 1.0;
        let u2 = u * u;
        let u3 = u2 * u;
        (
            1.0 + u - (u3 * u3 - 3.0 * u3 * u2 + 2.5 * u2 * u2),
            1.0 - (6.0 * u2 * u3 - 15.0 * u2 * u2 + 10.0 * u3),
            -30.0 * u2 * (1.0 - u) * (1.0 - u),
        )
    }
}

/// Convex profile `ψ(s)` of the squared speed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Psi {
    pub r: f64,
    pub mu: f64,
    /// Amplitude of a deliberate concave dent; zero for the real construction.
    pub dent: f64,
}

impl Psi {
    pub fn new(r: f64, mu: f64) -> Self {
        Self { r, mu, dent: 0.0 }
    }

    /// `(ψ, ψ′, ψ″)` at `s = |v|²`.
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        let r2 = self.r * self.r;
        if s <= r2 {
            (0.0, 0.0, 0.0)
        } else if s >= 4.0 * r2 {
            self.outer(s)
        } else {
            self.transition(s)
        }
    }

    fn outer(&self, s: f64) -> (f64, f64, f64) {
        let r2 = self.r * self.r;
        (self.mu * s - 2.0 * self.mu * r2, self.mu, 0.0)
    }

    fn transition(&self, s: f64) -> (f64, f64, f64) {
        let r2 = self.r * self.r;
        let mu = self.mu;
        let w = 3.0 * r2;
        let u = (s - r2) / w;
        let p = |c: &[f64]| c.iter().rev().fold(0.0, |acc, &k| acc * u + k);
        // G = ∫F, F = ∫168u²(1−u)⁵
        let g = p(&[
            0.0,
            0.0,
            0.0,
            0.0,
            14.0,
            -42.0,
            56.0,
            -40.0,
            15.0,
            -7.0 / 3.0,
        ]);
        let f = p(&[0.0, 0.0, 0.0, 56.0, -210.0, 336.0, -280.0, 120.0, -21.0]);
        let d = 168.0 * u * u * (1.0 - u).powi(5);
        let mut out = (w * mu * g, mu * f, mu * d / w);
        if self.dent != 0.0 {
            // 64u³(1−u)³ and its derivatives
            let b = 64.0 * (u * (1.0 - u)).powi(3);
            let b1 = 192.0 * (u * (1.0 - u)).powi(2) * (1.0 - 2.0 * u);
            let b2 = 384.0 * u * (1.0 - u) * ((1.0 - 2.0 * u).powi(2) - u * (1.0 - u));
            let a = self.dent * mu * r2;
            out.0 += a * b;
            out.1 += a * b1 / w;
            out.2 += a * b2 / (w * w);
        }
        out
    }

    /// Largest jump of `ψ`, `ψ′`, `ψ″` across the joints `s = R²` and
    /// `s = 4R²`, relative to `1 + |value|`.
    pub fn joint_jump(&self) -> f64 {
        let r2 = self.r * self.r;
        let pairs = [
            ((0.0, 0.0, 0.0), self.transition(r2)),
            (self.transition(4.0 * r2), self.outer(4.0 * r2)),
        ];
        pairs
            .iter()
            .flat_map(|(a, b)| [(a.0, b.0), (a.1, b.1), (a.2, b.2)])
            .map(|(x, y)| (x - y).abs() / (1.0 + x.abs().max(y.abs())))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModificationParams {
    pub r: f64,
    pub lambda: f64,
    pub mu: f64,
    pub c1: f64,
    pub safety: f64,
    /// `L₁` is constant for speeds beyond this radius.
    pub v_const: f64,
    pub min_l1: f64,
}

/// `L₀ = λφ(L/λ) + ψ(|v|²)`.
#[derive(Debug)]
pub struct ModifiedLagrangian {
    base: Lagrangian,
    pub params: ModificationParams,
    pub psi: Psi,
}

impl ModifiedLagrangian {
    pub fn base(&self) -> &Lagrangian {
        &self.base
    }

    fn l1_jet(&self, jet: Jet) -> Jet {
        let lambda = self.params.lambda;
        if jet.value <= lambda {
            return jet;
        }
        let (f, f1, f2) = phi(jet.value / lambda);
        jet.compose(lambda * f, f1, f2 / lambda)
    }

    pub fn l1_value(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> f64 {
        let l = self.base.value(t, chart, q, v);
        let lambda = self.params.lambda;
        if l <= lambda {
            l
        } else {
            lambda * phi(l / lambda).0
        }
    }

    pub fn l1_jet_at(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> Jet {
        self.l1_jet(self.base.jet(t, chart, q, v))
    }
}

impl LagrangianModel for ModifiedLagrangian {
    fn manifold(&self) -> &Manifold {
        self.base.manifold()
    }

    fn value(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> f64 {
        let l1 = self.l1_value(t, chart, q, v);
        let s = v.dot(&(self.manifold().metric(chart, q) * v));
        let r2 = self.params.r * self.params.r;
        if s <= r2 {
            l1
        } else {
            l1 + self.psi.eval(s).0
        }
    }

    fn first(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> FirstJet {
        let base = self.base.first(t, chart, q, v);
        let lambda = self.params.lambda;
        let mut out = if base.value <= lambda {
            base
        } else {
            let (f, f1, _) = phi(base.value / lambda);
            FirstJet {
                value: lambda * f,
                d_q: base.d_q * f1,
                d_v: base.d_v * f1,
            }
        };
        let g = self.manifold().metric(chart, q);
        let gv = &g * v;
        let s = v.dot(&gv);
        if s > self.params.r * self.params.r {
            let (p0, p1, _) = self.psi.eval(s);
            let dg = self.manifold().metric_derivatives(chart, q);
            out.value += p0;
            out.d_v += gv * (2.0 * p1);
            for (k, d) in dg.iter().enumerate() {
                out.d_q[k] += p1 * v.dot(&(d * v));
            }
        }
        out
    }

    fn jet(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> Jet {
        let j1 = self.l1_jet_at(t, chart, q, v);
        let kin = kinetic_jet(self.manifold(), chart, q, v);
        if kin.value <= self.params.r * self.params.r {
            return j1;
        }
        let (p0, p1, p2) = self.psi.eval(kin.value);
        j1.plus(&kin.compose(p0, p1, p2))
    }

    fn d_t(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> f64 {
        if self.autonomous() {
            return 0.0;
        }
        let l = self.base.value(t, chart, q, v);
        let dt = self.base.d_t(t, chart, q, v);
        if l <= self.params.lambda {
            dt
        } else {
            phi(l / self.params.lambda).1 * dt
        }
    }

    fn d_tv(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> Vector {
        if self.autonomous() {
            return Vector::zeros(q.len());
        }
        let f = self.base.first(t, chart, q, v);
        let dtv = self.base.d_tv(t, chart, q, v);
        if f.value <= self.params.lambda {
            return dtv;
        }
        let lambda = self.params.lambda;
        let (_, f1, f2) = phi(f.value / lambda);
        dtv * f1 + f.d_v * (f2 / lambda * self.base.d_t(t, chart, q, v))
    }

    fn autonomous(&self) -> bool {
        self.base.autonomous()
    }

    fn time_periodic(&self) -> bool {
        self.base.time_periodic()
    }

    fn derivative_mode(&self) -> DerivativeMode {
        self.base.derivative_mode()
    }

    fn describe(&self) -> String {
        format!(
            "R-modification (R = {}, lambda = {}, mu = {}) of [{}]",
            self.params.r,
            self.params.lambda,
            self.params.mu,
            self.base.describe()
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClauseResult {
    pub clause: String,
    pub passed: bool,
    /// Worst sampled margin; negative means violated.
    pub margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ModificationReport {
    pub clauses: Vec<ClauseResult>,
    pub samples: usize,
}

impl ModificationReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn clause(&self, name: &str) -> Option<&ClauseResult> {
        self.clauses.iter().find(|c| c.clause == name)
    }

    pub fn failures(&self) -> Vec<String> {
        self.clauses
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} (margin {:e})", c.clause, c.margin))
            .collect()
    }

    fn push(&mut self, clause: &str, margin: f64, witness: Option<String>) {
        self.clauses.push(ClauseResult {
            clause: clause.into(),
            passed: margin >= 0.0,
            margin,
            witness,
        });
    }
}

fn region(spec: &SampleSpec, v_max: f64) -> SampleSpec {
    SampleSpec {
        v_max,
        ..spec.clone()
    }
}

fn describe_sample(s: &PhaseSample) -> String {
    format!(
        "t={} chart={} q={:?} v={:?}",
        s.t,
        s.chart,
        s.q.as_slice(),
        s.w.as_slice()
    )
}

/// Worst value of `f` over samples, with its location.
fn worst(samples: &[PhaseSample], f: impl Fn(&PhaseSample) -> f64 + Sync) -> (f64, Option<String>) {
    let vals: Vec<f64> = samples.par_iter().map(&f).collect();
    let mut best = f64::INFINITY;
    let mut at = None;
    for (i, v) in vals.iter().enumerate() {
        if *v < best || v.is_nan() {
            best = if v.is_nan() { f64::NEG_INFINITY } else { *v };
            at = Some(i);
        }
    }
    (best, at.map(|i| describe_sample(&samples[i])))
}

fn op_norm(m: &Matrix) -> f64 {
    m.clone().singular_values().max()
}

/// Radius beyond which `L ≥ level` on every sampled ray.
fn level_radius(l: &dyn LagrangianModel, spec: &SampleSpec, start: f64, level: f64) -> Result<f64> {
    let unit = region(spec, 1.0);
    let mut rays = unit.tangent_samples(l.manifold(), l.autonomous());
    rays.retain(|s| s.speed == 1.0);
    let mut s = start.max(1e-3);
    for _ in 0..200 {
        let min = rays
            .par_iter()
            .map(|r| l.value(r.t, r.chart, &r.q, &(&r.w * s)))
            .reduce(|| f64::INFINITY, f64::min);
        if min >= level {
            return Ok(s);
        }
        s *= 1.25;
    }
    Err(Error::ModificationFailed(format!(
        "Lagrangian does not reach {level} on sampled rays; not superlinear?"
    )))
}

fn construct(
    l: &Lagrangian,
    r: f64,
    c1: f64,
    spec: &SampleSpec,
    safety: f64,
) -> Result<ModifiedLagrangian> {
    let m = l.manifold().clone();
    let inner = region(spec, 2.0 * r).tangent_samples(&m, l.autonomous());
    let max_l = inner
        .par_iter()
        .map(|s| l.value(s.t, s.chart, &s.q, &s.w))
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let lambda = safety * max_l.max(1e-3);
    let v_const = level_radius(l.as_ref(), spec, 2.0 * r, 2.0 * lambda)?;

    let partial = ModifiedLagrangian {
        base: l.clone(),
        params: ModificationParams {
            r,
            lambda,
            mu: 0.0,
            c1,
            safety,
            v_const,
            min_l1: 0.0,
        },
        psi: Psi::new(r, 0.0),
    };
    let dense = SampleSpec {
        speeds: 2 * spec.speeds,
        ..region(spec, v_const)
    };
    let samples = dense.tangent_samples(&m, l.autonomous());
    let (neg_curv, min_l1) = samples
        .par_iter()
        .map(|s| {
            let j = partial.l1_jet_at(s.t, s.chart, &s.q, &s.w);
            let g = m.metric(s.chart, &s.q);
            (-relative_eigen_range(&j.d_vv, &g).0, j.value)
        })
        .reduce(
            || (f64::NEG_INFINITY, f64::INFINITY),
            |a, b| (a.0.max(b.0), a.1.min(b.1)),
        );
    let mu = safety
        * neg_curv
            .max(1.0 / (4.0 * r))
            .max((2.0 * r - c1 - min_l1) / (2.0 * r * r));
    Ok(ModifiedLagrangian {
        base: l.clone(),
        params: ModificationParams {
            r,
            lambda,
            mu,
            c1,
            safety,
            v_const,
            min_l1,
        },
        psi: Psi::new(r, mu),
    })
}

pub struct LagrangianModification {
    pub model: Arc<ModifiedLagrangian>,
    pub report: ModificationReport,
}

impl LagrangianModification {
    pub fn params(&self) -> &ModificationParams {
        &self.model.params
    }

    pub fn lagrangian(&self) -> Lagrangian {
        self.model.clone()
    }

    /// Same construction with a concave dent of relative amplitude `dent`
    /// added to `ψ` on `[R², 4R²]`. Used to exercise verification failures.
    pub fn with_corrupted_psi(&self, dent: f64) -> ModifiedLagrangian {
        let mut psi = self.model.psi.clone();
        psi.dent = dent;
        ModifiedLagrangian {
            base: self.model.base.clone(),
            params: self.model.params.clone(),
            psi,
        }
    }
}

/// Builds `L₀` with safety factor 1.5 on `λ` and `μ`, verifies it on samples
/// and retries once with factor 2.0 on failure.
pub fn build_lagrangian_modification(
    l: &Lagrangian,
    r: f64,
    c1: f64,
    spec: &SampleSpec,
) -> Result<LagrangianModification> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidInput(format!(
            "modification radius must be positive, got {r}"
        )));
    }
    let mut last = None;
    for safety in [SAFETY, ESCALATED_SAFETY] {
        let model = construct(l, r, c1, spec, safety)?;
        let report = verify_lagrangian_modification(&model, spec);
        if report.passed() {
            return Ok(LagrangianModification {
                model: Arc::new(model),
                report,
            });
        }
        last = Some(report);
    }
    Err(Error::ModificationFailed(
        last.map(|r| r.failures().join(", ")).unwrap_or_default(),
    ))
}

/// Clause-by-clause sampled check of a Lagrangian modification.
pub fn verify_lagrangian_modification(
    m: &ModifiedLagrangian,
    spec: &SampleSpec,
) -> ModificationReport {
    let base = m.base.clone();
    let man = base.manifold().clone();
    let p = &m.params;
    let auto = base.autonomous();
    let within_r = region(spec, p.r).tangent_samples(&man, auto);
    let within_2r = region(spec, 2.0 * p.r).tangent_samples(&man, auto);
    let tail_start = p.v_const.max(2.0 * p.r);
    let full = region(spec, 2.0 * tail_start).tangent_samples(&man, auto);
    let mut report = ModificationReport {
        samples: within_r.len() + within_2r.len() + full.len(),
        ..Default::default()
    };

    // (a) node-exact agreement
    let (margin, witness) = worst(&within_r, |s| {
        let a = m.value(s.t, s.chart, &s.q, &s.w);
        let b = base.value(s.t, s.chart, &s.q, &s.w);
        if a == b {
            0.0
        } else {
            -(a - b).abs().max(f64::MIN_POSITIVE)
        }
    });
    report.push("a: L0 = L for |v| <= R", margin, witness);

    // (b) L1': uniform convexity
    let (ell0, witness) = worst(&full, |s| {
        let g = man.metric(s.chart, &s.q);
        relative_eigen_range(&m.jet(s.t, s.chart, &s.q, &s.w).d_vv, &g).0
    });
    report.push(
        "b: L1' (d_vv L0 >= l0 > 0)",
        if ell0 > 1e-12 {
            ell0
        } else {
            ell0.min(-f64::MIN_POSITIVE)
        },
        witness,
    );

    // (b) L2': quadratic growth of second derivatives, saturated at the tail
    let bound = |s: &PhaseSample| {
        let j = m.jet(s.t, s.chart, &s.q, &s.w);
        op_norm(&j.d_vv)
            .max(op_norm(&j.d_qv) / (1.0 + s.speed))
            .max(op_norm(&j.d_qq) / (1.0 + s.speed * s.speed))
    };
    let bounds: Vec<f64> = full.par_iter().map(bound).collect();
    let ell1_full = bounds.iter().copied().fold(0.0, f64::max);
    let ell1_inner = full
        .iter()
        .zip(&bounds)
        .filter(|(s, _)| s.speed <= 1.5 * tail_start)
        .map(|(_, b)| *b)
        .fold(0.0, f64::max);
    let l2_margin = if ell1_full.is_finite() {
        1.0 - ell1_full / (ell1_inner * (1.0 + 1e-6))
    } else {
        f64::NEG_INFINITY
    };
    report.push("b: L2' (second derivatives bounded by l1)", l2_margin, None);

    // (c) linear lower bound
    let (margin, witness) = worst(&full, |s| {
        m.value(s.t, s.chart, &s.q, &s.w) - s.speed + p.c1
    });
    report.push("c: L0 >= |v| - C(1)", margin, witness);

    // d_vv L0 >= d_vv L and L0 >= L below 2R
    let (margin, witness) = worst(&within_2r, |s| {
        let g = man.metric(s.chart, &s.q);
        let d = m.jet(s.t, s.chart, &s.q, &s.w).d_vv - base.jet(s.t, s.chart, &s.q, &s.w).d_vv;
        relative_eigen_range(&d, &g).0 + 1e-9 * (1.0 + d.amax())
    });
    report.push("d_vv L0 >= d_vv L for |v| <= 2R", margin, witness);
    let (margin, witness) = worst(&within_2r, |s| {
        let a = m.value(s.t, s.chart, &s.q, &s.w);
        a - base.value(s.t, s.chart, &s.q, &s.w) + 1e-12 * (1.0 + a.abs())
    });
    report.push("L0 >= L for |v| <= 2R", margin, witness);

    // d_vv L0 >= mu beyond 2R
    let outer: Vec<PhaseSample> = full
        .iter()
        .filter(|s| s.speed >= 2.0 * p.r)
        .cloned()
        .collect();
    let (margin, witness) = worst(&outer, |s| {
        let g = man.metric(s.chart, &s.q);
        relative_eigen_range(&m.jet(s.t, s.chart, &s.q, &s.w).d_vv, &g).0 - p.mu * (1.0 - 1e-9)
    });
    report.push("d_vv L0 >= mu for |v| >= 2R", margin, witness);

    // L0 - mu|v|^2 constant along rays in the tail
    let tail: Vec<PhaseSample> = full
        .iter()
        .filter(|s| s.speed >= tail_start)
        .cloned()
        .collect();
    let (margin, witness) = worst(&tail, |s| {
        let a = m.value(s.t, s.chart, &s.q, &s.w) - p.mu * s.speed * s.speed;
        let unit = &s.w / s.speed;
        let far = 2.0 * s.speed;
        let b = m.value(s.t, s.chart, &s.q, &(&unit * far)) - p.mu * far * far;
        1e-8 * (1.0 + p.mu * far * far) - (a - b).abs()
    });
    report.push("L0 = mu|v|^2 + const in the tail", margin, witness);

    report.push(
        "time periodicity preserved",
        if base.time_periodic() == m.time_periodic() {
            0.0
        } else {
            -1.0
        },
        None,
    );
    report
}

/// `φ_H(s) = 1 − S(s − R)` with the quintic smoothstep `S`: 1 on `[0,R]`,
/// 0 on `[R+1,∞)`, decreasing.
pub fn hamiltonian_cutoff(s: f64, r: f64) -> (f64, f64) {
    let u = (s - r).clamp(0.0, 1.0);
    if s <= r || s >= r + 1.0 {
        return (if s <= r { 1.0 } else { 0.0 }, 0.0);
    }
    let smooth = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
    let d = 30.0 * u * u * (1.0 - u) * (1.0 - u);
    (1.0 - smooth, -d)
}

/// `H₀ = φ(|p|)H + (1 − φ(|p|))C|p|²`.
#[derive(Debug)]
pub struct ModifiedHamiltonian {
    base: Hamiltonian,
    pub r: f64,
    pub c: f64,
}

impl HamiltonianModel for ModifiedHamiltonian {
    fn manifold(&self) -> &Manifold {
        self.base.manifold()
    }

    fn value(&self, t: f64, chart: usize, q: &Vector, p: &Vector) -> f64 {
        let rho = cofiber_norm(&self.manifold().metric(chart, q), p);
        let (f, _) = hamiltonian_cutoff(rho, self.r);
        if f == 1.0 {
            return self.base.value(t, chart, q, p);
        }
        let quad = self.c * rho * rho;
        if f == 0.0 {
            return quad;
        }
        f * self.base.value(t, chart, q, p) + (1.0 - f) * quad
    }

    fn first(&self, t: f64, chart: usize, q: &Vector, p: &Vector) -> FirstJet {
        let g = self.manifold().metric(chart, q);
        let ginv = g.try_inverse().expect("metric is positive definite");
        let gp = &ginv * p;
        let rho2 = p.dot(&gp);
        let rho = rho2.max(0.0).sqrt();
        let (f, f1) = hamiltonian_cutoff(rho, self.r);
        if f == 1.0 {
            return self.base.first(t, chart, q, p);
        }
        let dg = self.manifold().metric_derivatives(chart, q);
        // ∂_q |p|² = −pᵀg⁻¹ ∂g g⁻¹p
        let drho2_dq = Vector::from_iterator(q.len(), dg.iter().map(|d| -gp.dot(&(d * &gp))));
        let drho2_dp = &gp * 2.0;
        let quad = self.c * rho2;
        if f == 0.0 {
            return FirstJet {
                value: quad,
                d_q: drho2_dq * self.c,
                d_v: drho2_dp * self.c,
            };
        }
        let h = self.base.first(t, chart, q, p);
        // ∂ρ = ∂ρ² / (2ρ)
        let k = f1 * (h.value - quad) / (2.0 * rho);
        FirstJet {
            value: f * h.value + (1.0 - f) * quad,
            d_q: h.d_q * f + &drho2_dq * ((1.0 - f) * self.c + k),
            d_v: h.d_v * f + &drho2_dp * ((1.0 - f) * self.c + k),
        }
    }

    fn d_t(&self, t: f64, chart: usize, q: &Vector, p: &Vector) -> f64 {
        let rho = cofiber_norm(&self.manifold().metric(chart, q), p);
        let (f, _) = hamiltonian_cutoff(rho, self.r);
        if f == 0.0 {
            0.0
        } else {
            f * self.base.d_t(t, chart, q, p)
        }
    }

    fn autonomous(&self) -> bool {
        self.base.autonomous()
    }

    fn describe(&self) -> String {
        format!(
            "quadratic R-modification (R = {}, C = {}) of [{}]",
            self.r,
            self.c,
            self.base.describe()
        )
    }
}

pub struct HamiltonianModification {
    pub model: Arc<ModifiedHamiltonian>,
    pub report: ModificationReport,
    /// Offsets of the default `a`, `h` when they were fitted.
    pub c0: Option<f64>,
    pub c1: Option<f64>,
}

impl HamiltonianModification {
    pub fn hamiltonian(&self) -> Hamiltonian {
        self.model.clone()
    }
}

/// Builds `H₀` with `C = 1.5·max(1, max H/|p|² on R ≤ |p| ≤ R+1)`, verifying
/// Definition-2 clauses; retries once with factor 2.0. `a`, `h` default to
/// `s − c₀` and `s·ln(1+s) − c₁` fitted on the sample.
pub fn build_hamiltonian_modification(
    h: &Hamiltonian,
    r: f64,
    a: Option<ScalarFn>,
    hfun: Option<ScalarFn>,
    spec: &SampleSpec,
) -> Result<HamiltonianModification> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidInput(format!(
            "modification radius must be positive, got {r}"
        )));
    }
    // fitted on the same grid the verification uses
    let fit = check_h1_h2(h.as_ref(), a, hfun, &region(spec, 3.0 * (r + 1.0)));
    let (c0, c1) = (fit.c0, fit.c1);
    let a_default = move |s: f64| s - c0.unwrap_or(0.0);
    let h_default = move |s: f64| s * (1.0 + s).ln() - c1.unwrap_or(0.0);
    let a_fn: ScalarFn = a.unwrap_or(&a_default);
    let h_fn: ScalarFn = hfun.unwrap_or(&h_default);

    let levels = region(spec, 4.0 * (r + 1.0)).speed_levels();
    if let Some(s) = levels.iter().find(|&&s| s >= r && s * s < a_fn(s)) {
        return Err(Error::InvalidInput(format!(
            "R = {r} too small: |p|^2 < a(|p|) at |p| = {s}"
        )));
    }

    let man = h.manifold().clone();
    let shell: Vec<PhaseSample> = region(spec, r + 1.0)
        .cotangent_samples(&man, h.autonomous())
        .into_iter()
        .map(|mut s| {
            // rescale speeds from [0, R+1] onto [R, R+1]
            let target = r + s.speed / (r + 1.0);
            if s.speed > 0.0 {
                s.w *= target / s.speed;
            } else {
                let dir = spec.unit_directions(man.dim())[0].clone();
                let g = man.metric(s.chart, &s.q);
                s.w = &dir * (target / cofiber_norm(&g, &dir));
            }
            s.speed = target;
            s
        })
        .collect();
    let ratio = shell
        .par_iter()
        .map(|s| h.value(s.t, s.chart, &s.q, &s.w) / (s.speed * s.speed))
        .reduce(|| f64::NEG_INFINITY, f64::max);

    let mut last = None;
    for safety in [SAFETY, ESCALATED_SAFETY] {
        let model = ModifiedHamiltonian {
            base: h.clone(),
            r,
            c: safety * ratio.max(1.0),
        };
        let report = verify_hamiltonian_modification(&model, a_fn, h_fn, spec);
        if report.passed() {
            return Ok(HamiltonianModification {
                model: Arc::new(model),
                report,
                c0,
                c1,
            });
        }
        last = Some(report);
    }
    Err(Error::ModificationFailed(
        last.map(|r| r.failures().join(", ")).unwrap_or_default(),
    ))
}

pub fn verify_hamiltonian_modification(
    m: &ModifiedHamiltonian,
    a: ScalarFn,
    hfun: ScalarFn,
    spec: &SampleSpec,
) -> ModificationReport {
    let man = m.manifold().clone();
    let auto = m.autonomous();
    let within_r = region(spec, m.r).cotangent_samples(&man, auto);
    let outer_radius = 3.0 * (m.r + 1.0);
    let full = region(spec, outer_radius).cotangent_samples(&man, auto);
    let mut report = ModificationReport {
        samples: within_r.len() + full.len(),
        ..Default::default()
    };

    let (margin, witness) = worst(&within_r, |s| {
        let a = m.value(s.t, s.chart, &s.q, &s.w);
        let b = m.base.value(s.t, s.chart, &s.q, &s.w);
        if a == b {
            0.0
        } else {
            -(a - b).abs().max(f64::MIN_POSITIVE)
        }
    });
    report.push("a: H0 = H for |p| <= R", margin, witness);

    // (H1'): h0 from the quadratic tail, h1 the worst offset
    let integrand: Vec<f64> = full
        .par_iter()
        .map(|s| action_integrand(m, s.t, s.chart, &s.q, &s.w))
        .collect();
    let h0 = full
        .iter()
        .zip(&integrand)
        .filter(|(s, _)| s.speed >= m.r + 1.0)
        .map(|(s, i)| 0.5 * i / (s.speed * s.speed))
        .fold(f64::INFINITY, f64::min);
    report.push(
        "b: H1' (DH[Y] - H >= h0|p|^2 - h1, h0 > 0)",
        if h0.is_finite() && h0 > 0.0 { h0 } else { -1.0 },
        None,
    );

    // (H2'): h2 saturates before the outer shell
    let bound = |s: &PhaseSample| {
        let f = m.first(s.t, s.chart, &s.q, &s.w);
        (f.d_q.norm() / (1.0 + s.speed * s.speed)).max(f.d_v.norm() / (1.0 + s.speed))
    };
    let bounds: Vec<f64> = full.par_iter().map(bound).collect();
    let h2_full = bounds.iter().copied().fold(0.0, f64::max);
    let h2_inner = full
        .iter()
        .zip(&bounds)
        .filter(|(s, _)| s.speed <= 2.0 * (m.r + 1.0))
        .map(|(_, b)| *b)
        .fold(0.0, f64::max);
    report.push(
        "b: H2' (first derivatives bounded by h2)",
        if h2_full.is_finite() && h2_full <= h2_inner * (1.0 + 1e-6) {
            0.0
        } else {
            -1.0
        },
        None,
    );

    // offsets fitted on this very sample are tight up to rounding
    let slack = |x: f64| 1e-12 * (1.0 + x.abs());
    let (margin, witness) = worst(&full, |s| {
        let x = action_integrand(m, s.t, s.chart, &s.q, &s.w);
        x - a(s.speed) + slack(x)
    });
    report.push("c: DH0[Y] - H0 >= a(|p|)", margin, witness);
    let (margin, witness) = worst(&full, |s| {
        let x = m.value(s.t, s.chart, &s.q, &s.w);
        x - hfun(s.speed) + slack(x)
    });
    report.push("d: H0 >= h(|p|)", margin, witness);

    let tail: Vec<PhaseSample> = full
        .iter()
        .filter(|s| s.speed >= m.r + 1.0)
        .cloned()
        .collect();
    let (margin, witness) = worst(&tail, |s| {
        let v = m.value(s.t, s.chart, &s.q, &s.w);
        let g = man.metric(s.chart, &s.q);
        let quad = m.c * cofiber_norm(&g, &s.w).powi(2);
        1e-12 * (1.0 + quad) - (v - quad).abs()
    });
    report.push("H0 = C|p|^2 for |p| >= R+1", margin, witness);
    report
}

/// Speed helper shared with certification.
pub fn speed(m: &Manifold, chart: usize, q: &Vector, v: &Vector) -> f64 {
    fiber_norm(&m.metric(chart, q), v)
}
