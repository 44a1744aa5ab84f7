//! Sampled checks of the standing assumptions. Every verdict here is a
//! necessary-condition check on a finite sample, never a proof.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Matrix, Vector};

use super::hamiltonian::{action_integrand, HamiltonianModel};
use super::sampling::{PhaseSample, SampleSpec};
use super::LagrangianModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    /// Degenerate only at the zero section.
    FailAtZero {
        witness: String,
    },
    Fail {
        reason: String,
    },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::FailAtZero { .. } => "FAIL-at-zero",
            Verdict::Fail { .. } => "FAIL",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthConstant {
    pub k: f64,
    pub c: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub verdict: Verdict,
    /// Smallest sampled `c`; absent on failure.
    pub c: Option<f64>,
    /// Constant added to `H` so that it is nonnegative on the sample.
    pub shift: f64,
    /// Max ratio on the full sample over max ratio on the inner half.
    pub growth: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TonelliReport {
    pub ell0_estimate: f64,
    pub ell0_witness: String,
    pub growth_constants: Vec<GrowthConstant>,
    pub convexity: Verdict,
    pub superlinearity: Verdict,
    pub completeness: CompletenessReport,
    pub sample: String,
    pub sample_size: usize,
}

impl TonelliReport {
    pub fn c(&self, k: f64) -> Option<f64> {
        self.growth_constants.iter().find(|g| g.k == k).map(|g| g.c)
    }

    pub fn c1(&self) -> f64 {
        self.c(1.0).expect("C(1) is always sampled")
    }
}

/// `(min, max)` eigenvalue of `h` relative to the inner product `g`.
pub fn relative_eigen_range(h: &Matrix, g: &Matrix) -> (f64, f64) {
    let a = match g.clone().cholesky() {
        Some(ch) => {
            let l = ch.l();
            let linv = l.try_inverse().expect("Cholesky factor is invertible");
            &linv * h * linv.transpose()
        }
        None => h.clone(),
    };
    let sym = (&a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    (eig.min(), eig.max())
}

fn witness(s: &PhaseSample) -> String {
    format!(
        "t={:.4} chart={} q={:?} v={:?}",
        s.t,
        s.chart,
        s.q.as_slice(),
        s.w.as_slice()
    )
}

const GROWTH_KS: [f64; 4] = [1.0, 2.0, 3.0, 4.0];

/// Convexity and superlinearity on the fibers, plus the completeness
/// criterion in its Lagrangian form `−∂ₜL ≤ c(1 + ∂ᵥL[v] − L)`.
pub fn check_tonelli(l: &dyn LagrangianModel, spec: &SampleSpec) -> Result<TonelliReport> {
    if spec.v_max < 10.0 {
        return Err(Error::InvalidInput(format!(
            "sample bound v_max = {} must be at least 10",
            spec.v_max
        )));
    }
    let m = l.manifold().clone();
    let samples = spec.tangent_samples(&m, l.autonomous());
    struct Eval {
        lmin: f64,
        asym: f64,
        scale: f64,
        value: f64,
        energy: f64,
        minus_dt: f64,
    }
    let evals: Vec<Eval> = samples
        .par_iter()
        .map(|s| {
            let jet = l.jet(s.t, s.chart, &s.q, &s.w);
            let g = m.metric(s.chart, &s.q);
            let (lmin, _) = relative_eigen_range(&jet.d_vv, &g);
            Eval {
                lmin,
                asym: (&jet.d_vv - jet.d_vv.transpose()).amax(),
                scale: 1.0 + jet.d_vv.amax(),
                value: jet.value,
                energy: jet.d_v.dot(&s.w) - jet.value,
                minus_dt: -l.d_t(s.t, s.chart, &s.q, &s.w),
            }
        })
        .collect();

    let mut ell0 = f64::INFINITY;
    let mut at = 0;
    for (i, e) in evals.iter().enumerate() {
        if e.asym > 1e-8 * e.scale {
            return Err(Error::Asymmetric {
                asymmetry: e.asym,
                witness: witness(&samples[i]),
            });
        }
        if e.lmin < -1e-8 * e.scale {
            return Err(Error::NotConvex {
                eigenvalue: e.lmin,
                witness: witness(&samples[i]),
            });
        }
        if e.lmin < ell0 {
            ell0 = e.lmin;
            at = i;
        }
    }
    let convexity = if ell0 > 1e-8 {
        Verdict::Pass
    } else if samples[at].speed == 0.0 {
        Verdict::FailAtZero {
            witness: witness(&samples[at]),
        }
    } else {
        Verdict::Fail {
            reason: format!("fiber Hessian degenerate at {}", witness(&samples[at])),
        }
    };

    let inner = 0.75 * spec.v_max;
    let mut growth_constants = Vec::new();
    let mut superlinearity = Verdict::Pass;
    for k in GROWTH_KS {
        let mut full = f64::NEG_INFINITY;
        let mut restricted = f64::NEG_INFINITY;
        for (s, e) in samples.iter().zip(&evals) {
            let c = k * s.speed - e.value;
            full = full.max(c);
            if s.speed <= inner {
                restricted = restricted.max(c);
            }
        }
        if full > restricted + 1e-9 * (1.0 + full.abs()) && superlinearity.passed() {
            superlinearity = Verdict::Fail {
                reason: format!(
                    "K|v| - L still grows at the sample boundary for K = {k} ({restricted} -> {full})"
                ),
            };
        }
        let c = polish_growth(
            l,
            &samples,
            &evals.iter().map(|e| e.value).collect::<Vec<_>>(),
            k,
            spec.v_max,
        );
        growth_constants.push(GrowthConstant { k, c: c.max(full) });
    }

    let completeness = if l.autonomous() {
        autonomous_completeness()
    } else {
        let pts: Vec<(f64, f64, f64)> = samples
            .iter()
            .zip(&evals)
            .map(|(s, e)| (s.speed, e.energy, e.minus_dt))
            .collect();
        ratio_criterion(&pts, spec.v_max)
    };

    Ok(TonelliReport {
        ell0_estimate: ell0,
        ell0_witness: witness(&samples[at]),
        growth_constants,
        convexity,
        superlinearity,
        completeness,
        sample: spec.describe(),
        sample_size: samples.len(),
    })
}

/// Sampled `sup K|w| − L`, refined by compass search from the best samples
/// so that a coarse grid does not miss an interior maximum.
fn polish_growth(
    l: &dyn LagrangianModel,
    samples: &[PhaseSample],
    values: &[f64],
    k: f64,
    v_max: f64,
) -> f64 {
    let m = l.manifold();
    let n = m.dim();
    let f = |t: f64, chart: usize, q: &Vector, w: &Vector| {
        let g = m.metric(chart, q);
        let speed = w.dot(&(&g * w)).max(0.0).sqrt();
        let c = k * speed - l.value(t, chart, q, w);
        if c.is_finite() && speed <= v_max {
            c
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let score = |i: usize| k * samples[i].speed - values[i];
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)));
    let polished: Vec<f64> = order
        .par_iter()
        .take(8)
        .map(|&i| {
            let s = &samples[i];
            let (mut t, mut q, mut w) = (s.t, s.q.clone(), s.w.clone());
            let mut best = f(t, s.chart, &q, &w);
            let mut h = 0.1;
            let mut iters = 0;
            let axes = 2 * n + usize::from(!l.autonomous());
            while h > 1e-10 && iters < 5000 {
                iters += 1;
                let mut improved = false;
                for a in 0..axes {
                    for sign in [1.0, -1.0] {
                        let (mut t1, mut q1, mut w1) = (t, q.clone(), w.clone());
                        if a < n {
                            q1[a] += sign * h;
                        } else if a < 2 * n {
                            w1[a - n] += sign * h;
                        } else {
                            t1 = (t1 + sign * h).clamp(0.0, 1.0);
                        }
                        let c = f(t1, s.chart, &q1, &w1);
                        if c > best {
                            best = c;
                            (t, q, w) = (t1, q1, w1);
                            improved = true;
                        }
                    }
                }
                if !improved {
                    h *= 0.5;
                }
            }
            best
        })
        .collect();
    polished.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn autonomous_completeness() -> CompletenessReport {
    CompletenessReport {
        verdict: Verdict::Pass,
        c: Some(0.0),
        shift: 0.0,
        growth: 1.0,
    }
}

/// `pts = (|p|, H, ∂ₜH)`. `H` is shifted by its sampled minimum when that is
/// negative; the criterion is invariant under such a shift up to `c`.
fn ratio_criterion(pts: &[(f64, f64, f64)], v_max: f64) -> CompletenessReport {
    let hmin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let shift = (-hmin).max(0.0);
    let mut full = 0.0f64;
    let mut half = 0.0f64;
    for &(s, h, dt) in pts {
        let r = dt / (1.0 + h + shift);
        if !r.is_finite() {
            return CompletenessReport {
                verdict: Verdict::Fail {
                    reason: format!("non-finite ratio at |p| = {s}"),
                },
                c: None,
                shift,
                growth: f64::INFINITY,
            };
        }
        full = full.max(r);
        if s <= 0.5 * v_max + 1e-12 {
            half = half.max(r);
        }
    }
    let growth = if half > 0.0 {
        full / half
    } else if full > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    if growth > 1.25 && full > 1e-12 {
        CompletenessReport {
            verdict: Verdict::Fail {
                reason: format!("dH/dt / (1 + H) grows across the sample ({half} -> {full})"),
            },
            c: None,
            shift,
            growth,
        }
    } else {
        CompletenessReport {
            verdict: Verdict::Pass,
            c: Some(full),
            shift,
            growth,
        }
    }
}

/// `∂ₜH ≤ c(1 + H)` on cotangent samples.
pub fn check_completeness_criterion(
    h: &dyn HamiltonianModel,
    spec: &SampleSpec,
) -> CompletenessReport {
    if h.autonomous() {
        return autonomous_completeness();
    }
    let m = h.manifold().clone();
    let pts: Vec<(f64, f64, f64)> = spec
        .cotangent_samples(&m, false)
        .par_iter()
        .map(|s| {
            (
                s.speed,
                h.value(s.t, s.chart, &s.q, &s.w),
                h.d_t(s.t, s.chart, &s.q, &s.w),
            )
        })
        .collect();
    ratio_criterion(&pts, spec.v_max)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct H1H2Report {
    pub h1: Verdict,
    pub h2: Verdict,
    /// Fitted offsets of the default `a(s) = s − c₀`, `h(s) = s·ln(1+s) − c₁`.
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    /// Worst sampled `DH[Y] − H − a(|p|)` and `H − h(|p|)`.
    pub h1_margin: f64,
    pub h2_margin: f64,
    pub sample: String,
}

pub type ScalarFn<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

fn shell_min(vals: &[(f64, f64)], s: f64) -> f64 {
    vals.iter()
        .filter(|(sp, _)| (sp - s).abs() < 1e-9)
        .map(|p| p.1)
        .fold(f64::INFINITY, f64::min)
}

/// Coercivity of the action integrand and superlinearity of `H`. Besides the
/// pointwise bounds, both verdicts require the sampled lower envelope to keep
/// growing between the half-radius and the outer shell.
pub fn check_h1_h2(
    h: &dyn HamiltonianModel,
    a: Option<ScalarFn>,
    hfun: Option<ScalarFn>,
    spec: &SampleSpec,
) -> H1H2Report {
    let m = h.manifold().clone();
    let samples = spec.cotangent_samples(&m, h.autonomous());
    let vals: Vec<(f64, f64, f64)> = samples
        .par_iter()
        .map(|s| {
            (
                s.speed,
                action_integrand(h, s.t, s.chart, &s.q, &s.w),
                h.value(s.t, s.chart, &s.q, &s.w),
            )
        })
        .collect();

    let levels = spec.speed_levels();
    let outer = *levels.last().expect("at least two speed levels");
    let mid = levels
        .iter()
        .copied()
        .min_by(|x, y| (x - outer / 2.0).abs().total_cmp(&(y - outer / 2.0).abs()))
        .expect("at least two speed levels");

    let (c0, a_eval): (Option<f64>, Box<dyn Fn(f64) -> f64>) = match a {
        Some(f) => (None, Box::new(f)),
        None => {
            let c0 = vals
                .iter()
                .map(|(s, i, _)| s - i)
                .fold(f64::NEG_INFINITY, f64::max);
            (Some(c0), Box::new(move |s| s - c0))
        }
    };
    let (c1, h_eval): (Option<f64>, Box<dyn Fn(f64) -> f64>) = match hfun {
        Some(f) => (None, Box::new(f)),
        None => {
            let c1 = vals
                .iter()
                .map(|(s, _, hv)| s * (1.0 + s).ln() - hv)
                .fold(f64::NEG_INFINITY, f64::max);
            (Some(c1), Box::new(move |s| s * (1.0 + s).ln() - c1))
        }
    };

    let h1_margin = vals
        .iter()
        .map(|(s, i, _)| i - a_eval(*s))
        .fold(f64::INFINITY, f64::min);
    let h2_margin = vals
        .iter()
        .map(|(s, _, hv)| hv - h_eval(*s))
        .fold(f64::INFINITY, f64::min);

    let integrand: Vec<(f64, f64)> = vals.iter().map(|(s, i, _)| (*s, *i)).collect();
    let ratio: Vec<(f64, f64)> = vals
        .iter()
        .filter(|(s, _, _)| *s > 0.0)
        .map(|(s, _, hv)| (*s, hv / s))
        .collect();
    let i_growth = shell_min(&integrand, outer) - shell_min(&integrand, mid);
    let h_growth = shell_min(&ratio, outer) - shell_min(&ratio, mid);

    let h1 = if h1_margin < -1e-9 {
        Verdict::Fail {
            reason: format!("DH[Y] - H falls below a(|p|) by {}", -h1_margin),
        }
    } else if i_growth < 0.5 * (outer - mid) {
        Verdict::Fail {
            reason: format!(
                "action integrand envelope grows only {i_growth} from |p| = {mid} to {outer}"
            ),
        }
    } else {
        Verdict::Pass
    };
    let h2 = if h2_margin < -1e-9 {
        Verdict::Fail {
            reason: format!("H falls below h(|p|) by {}", -h2_margin),
        }
    } else if h_growth < 0.5 * (outer / mid).ln() {
        Verdict::Fail {
            reason: format!("H/|p| envelope grows only {h_growth} from |p| = {mid} to {outer}"),
        }
    } else {
        Verdict::Pass
    };

    H1H2Report {
        h1,
        h2,
        c0,
        c1,
        h1_margin,
        h2_margin,
        sample: spec.describe(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_torus;
    use crate::models::expr::ExprHamiltonian;
    use crate::models::{MechanicalHamiltonian, PolynomialLagrangian, Potential};

    #[test]
    fn kinetic_lagrangian_on_torus() {
        let l = PolynomialLagrangian::mechanical(build_torus(2).unwrap(), Potential::Zero);
        let r = check_tonelli(&l, &SampleSpec::default()).unwrap();
        assert!((r.ell0_estimate - 1.0).abs() < 1e-12);
        assert!((r.c1() - 0.5).abs() < 1e-12);
        assert!(r.convexity.passed() && r.superlinearity.passed());
        assert_eq!(r.completeness.c, Some(0.0));
    }

    #[test]
    fn pure_quartic_degenerates_at_zero() {
        let l = PolynomialLagrangian::quartic(build_torus(1).unwrap(), 1.0, 0.0, Potential::Zero);
        let r = check_tonelli(&l, &SampleSpec::default()).unwrap();
        assert!(r.ell0_estimate.abs() < 1e-12);
        assert!(matches!(r.convexity, Verdict::FailAtZero { .. }));
        assert!(r.superlinearity.passed());
    }

    #[test]
    fn growth_constant_with_potential() {
        let l = PolynomialLagrangian::quartic(
            build_torus(1).unwrap(),
            0.0,
            1.0,
            Potential::Cos2 { epsilon: -1.0 },
        );
        let r = check_tonelli(&l, &SampleSpec::default()).unwrap();
        assert!((r.c1() - 1.5).abs() < 1e-12);
        let cs: Vec<f64> = r.growth_constants.iter().map(|g| g.c).collect();
        assert!(cs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn small_sample_bound_is_rejected() {
        let l = PolynomialLagrangian::mechanical(build_torus(1).unwrap(), Potential::Zero);
        assert!(check_tonelli(&l, &SampleSpec::with_v_max(5.0)).is_err());
    }

    #[test]
    fn concave_lagrangian_is_an_error() {
        let l = PolynomialLagrangian::quartic(build_torus(1).unwrap(), -1.0, 1.0, Potential::Zero);
        assert!(matches!(
            check_tonelli(&l, &SampleSpec::default()),
            Err(Error::NotConvex { .. })
        ));
    }

    #[test]
    fn completeness_criterion_cases() {
        let m = build_torus(1).unwrap();
        let spec = SampleSpec::default();
        let autonomous = MechanicalHamiltonian::new(m.clone(), Potential::Cos2 { epsilon: 1.0 });
        assert_eq!(
            check_completeness_criterion(&autonomous, &spec).c,
            Some(0.0)
        );
        let periodic = ExprHamiltonian::new(m.clone(), "p^2/2 + sin(2*pi*t)*cos(2*pi*q)").unwrap();
        let r = check_completeness_criterion(&periodic, &spec);
        assert!(r.verdict.passed());
        let c = r.c.unwrap();
        assert!(c.is_finite() && c > 0.0 && c <= 2.0 * std::f64::consts::PI);
        let blowup = ExprHamiltonian::new(m, "p^2/2 + t*p^4/4").unwrap();
        let r = check_completeness_criterion(&blowup, &spec);
        assert!(!r.verdict.passed() && r.c.is_none());
    }

    #[test]
    fn h1_h2_cases() {
        let m = build_torus(1).unwrap();
        let spec = SampleSpec::default();
        let kinetic = ExprHamiltonian::new(m.clone(), "p^2/2").unwrap();
        let a = |s: f64| s - 1.0;
        let r = check_h1_h2(&kinetic, Some(&a), None, &spec);
        assert!(r.h1.passed() && r.h2.passed());

        let linear = ExprHamiltonian::new(m.clone(), "abs(p)").unwrap();
        let r = check_h1_h2(&linear, None, None, &spec);
        assert!(!r.h2.passed());

        let mech = MechanicalHamiltonian::new(m, Potential::Cos2 { epsilon: 1.0 });
        let h = |s: f64| s * s / 2.0 - 1.0;
        let r = check_h1_h2(&mech, None, Some(&h), &spec);
        assert!(r.h1.passed() && r.h2.passed());
        assert!(r.h2_margin >= 0.0);
    }
}
