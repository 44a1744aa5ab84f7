//! Critical points of the discrete action: preconditioned descent, damped
//! Newton refinement, sweep-family minimax, Morse indices and the end-to-end
//! modify/solve/certify pipeline.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    certify_solution, estimate_r_a, Certificate, GridSpec, ReachableSetEstimate,
};
use crate::error::{Error, Result};
use crate::geometry::Matrix;
use crate::models::{check_tonelli, Lagrangian, LagrangianModel, SampleSpec, TonelliReport};
use crate::modification::{build_lagrangian_modification, ModificationParams};
use crate::pathspace::{
    action, conormal_residual, gradient, hessian, BoundaryCondition, DiscretePath, Gradient,
    PathRecord, VariationSpace,
};

pub mod families;
pub mod inertia;
pub mod minimax;

pub use families::{SweepFamily, Topology};
pub use inertia::{index_pair, inertia, Inertia};
pub use minimax::{minimax, MinimaxResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Descent stops once the `W^{1,2}` dual gradient norm is below this.
    pub descent_tol: f64,
    pub refine_tol: f64,
    pub max_descent_iterations: usize,
    pub max_newton_iterations: usize,
    /// Minimax stops when the family max drops by less than `stall_tol`
    /// over `stall_rounds` rounds.
    pub stall_rounds: usize,
    pub stall_tol: f64,
    pub max_minimax_rounds: usize,
    pub redistribute_every: usize,
    /// Mesh used while deforming families; defaults to a quarter of the
    /// solution mesh.
    pub family_segments: Option<usize>,
    /// Members tried, in decreasing action, when extracting a minimax path.
    pub candidates: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            descent_tol: 1e-3,
            refine_tol: 1e-10,
            max_descent_iterations: 50_000,
            max_newton_iterations: 50,
            stall_rounds: 50,
            stall_tol: 1e-8,
            max_minimax_rounds: 20_000,
            redistribute_every: 1,
            family_segments: None,
            candidates: 4,
        }
    }
}

/// A path refined to a critical point together with its gradient data.
#[derive(Clone, Debug)]
pub struct Refined {
    pub path: DiscretePath,
    pub gradient: Gradient,
    /// Actions along the descent, one per accepted step.
    pub descent_log: Vec<f64>,
    pub newton_steps: usize,
}

/// One Armijo step along `−riesz`. Returns `None` when no step size down
/// to `1e−14` gives sufficient decrease.
pub(crate) fn descent_step(
    l: &dyn LagrangianModel,
    bc: &BoundaryCondition,
    path: &DiscretePath,
    grad: &Gradient,
    mut alpha: f64,
) -> Option<(DiscretePath, f64, f64)> {
    let space = VariationSpace::new(bc, path);
    let segs = path.segments();
    let norm2 = grad.norm * grad.norm;
    while alpha >= 1e-14 {
        let delta = space.expand(&(&grad.riesz * -alpha));
        if let Ok(trial) = path.displaced(&delta, |i| bc.rebases(i, segs)) {
            if let Ok(a) = action(l, &trial) {
                if a <= grad.action - 1e-4 * alpha * norm2 {
                    return Some((trial, a, alpha));
                }
            }
        }
        alpha *= 0.5;
    }
    None
}

/// Preconditioned gradient descent to `descent_tol`, then Newton to
/// `refine_tol`. The action decreases monotonically during descent.
pub fn minimize(
    l: &dyn LagrangianModel,
    bc: &BoundaryCondition,
    seed: &DiscretePath,
    opts: &SolverOptions,
) -> Result<Refined> {
    let mut path = bc.apply(seed)?;
    let mut log = Vec::new();
    let mut alpha: f64 = 1.0;
    let mut converged = false;
    let mut last_norm = f64::INFINITY;
    for _ in 0..opts.max_descent_iterations {
        let g = gradient(l, &path, bc)?;
        last_norm = g.norm;
        if g.norm < opts.descent_tol {
            converged = true;
            break;
        }
        match descent_step(l, bc, &path, &g, (2.0 * alpha).min(1.0)) {
            Some((next, a, used)) => {
                path = next;
                log.push(a);
                alpha = used;
            }
            None => break,
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            stage: "minimize",
            iterations: log.len(),
            gradient_norm: last_norm,
        });
    }
    let mut refined = refine_newton(l, bc, &path, opts)?;
    refined.descent_log = log;
    Ok(refined)
}

/// Damped Newton on the constrained node system with merit `‖∇𝔸‖²`; falls
/// back to a descent step when the Hessian is singular or damping fails.
pub fn refine_newton(
    l: &dyn LagrangianModel,
    bc: &BoundaryCondition,
    path: &DiscretePath,
    opts: &SolverOptions,
) -> Result<Refined> {
    let mut path = bc.apply(path)?;
    let segs = path.segments();
    let mut g = gradient(l, &path, bc)?;
    for step in 0..=opts.max_newton_iterations {
        if g.norm < opts.refine_tol {
            return Ok(Refined {
                path,
                gradient: g,
                descent_log: Vec::new(),
                newton_steps: step,
            });
        }
        if step == opts.max_newton_iterations {
            break;
        }
        let space = VariationSpace::new(bc, &path);
        let h = hessian(l, &path, bc)?;
        let newton = h
            .lu()
            .solve(&-&g.dual)
            .filter(|d| d.iter().all(|x| x.is_finite()));
        let mut accepted = None;
        if let Some(dir) = newton {
            let mut alpha = 1.0;
            while alpha >= 1e-6 {
                let delta = space.expand(&(&dir * alpha));
                if let Ok(trial) = path.displaced(&delta, |i| bc.rebases(i, segs)) {
                    if let Ok(gt) = gradient(l, &trial, bc) {
                        if gt.norm < (1.0 - 1e-4 * alpha) * g.norm || gt.norm < opts.refine_tol {
                            accepted = Some((trial, gt));
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
        }
        if accepted.is_none() {
            if let Some((trial, _, _)) = descent_step(l, bc, &path, &g, 1.0) {
                let gt = gradient(l, &trial, bc)?;
                accepted = Some((trial, gt));
            }
        }
        match accepted {
            Some((p, gt)) => {
                path = p;
                g = gt;
            }
            None => break,
        }
    }
    Err(Error::NoConvergence {
        stage: "refine_newton",
        iterations: opts.max_newton_iterations,
        gradient_norm: g.norm,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorseIndex {
    pub m: usize,
    pub m_star: usize,
    pub kappa: f64,
    pub segments: usize,
    /// Indices recomputed on the doubled mesh.
    pub m_fine: usize,
    pub m_star_fine: usize,
    pub stable: bool,
}

impl MorseIndex {
    pub fn require_stable(&self) -> Result<()> {
        if self.stable {
            Ok(())
        } else {
            Err(Error::UnstableIndex {
                m: self.m,
                m_star: self.m_star,
                m2: self.m_fine,
                m2_star: self.m_star_fine,
            })
        }
    }
}

/// `(m, m*, κ)` of the constrained Hessian at `path`, `κ = 1e−8 ‖H‖∞`.
pub fn index_at(
    l: &dyn LagrangianModel,
    bc: &BoundaryCondition,
    path: &DiscretePath,
) -> Result<(usize, usize, f64)> {
    let h = hessian(l, path, bc)?;
    Ok(index_of_matrix(&h))
}

fn index_of_matrix(h: &Matrix) -> (usize, usize, f64) {
    let norm = h
        .row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let kappa = 1e-8 * norm;
    let (m, ms) = index_pair(h, kappa);
    (m, ms, kappa)
}

/// Morse indices at the path's mesh and, after re-refinement, at twice
/// the mesh. Disagreement is reported through `stable`.
pub fn morse_index(
    l: &dyn LagrangianModel,
    bc: &BoundaryCondition,
    path: &DiscretePath,
    opts: &SolverOptions,
) -> Result<MorseIndex> {
    let (m, m_star, kappa) = index_at(l, bc, path)?;
    let fine = bc.apply(&path.resample(2 * path.segments())?)?;
    let fine = match refine_newton(l, bc, &fine, opts) {
        Ok(r) => r.path,
        Err(_) => fine,
    };
    let (m_fine, m_star_fine, _) = index_at(l, bc, &fine)?;
    Ok(MorseIndex {
        m,
        m_star,
        kappa,
        segments: path.segments(),
        m_fine,
        m_star_fine,
        stable: m == m_fine && m_star == m_star_fine,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Minimum {
        family: String,
    },
    Minimax {
        family: String,
        degree: usize,
        level: f64,
        rounds: usize,
        member: usize,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalPointRecord {
    pub provenance: Provenance,
    /// Action under the original Lagrangian.
    pub action: f64,
    pub gradient_norm: f64,
    pub morse_index: MorseIndex,
    pub conormal_residual: f64,
    pub constraint_residual: f64,
    pub max_speed: f64,
    pub certificate: Certificate,
    pub path: PathRecord,
}

impl CriticalPointRecord {
    pub fn certified(&self) -> bool {
        self.certificate.certified()
    }
}

/// Builds the record of a refined path: gradient, residuals and Morse index
/// under `l`, certificate against `l0`.
#[allow(clippy::too_many_arguments)]
pub fn build_record(
    l: &dyn LagrangianModel,
    l0: &dyn LagrangianModel,
    bc: &BoundaryCondition,
    path: &DiscretePath,
    provenance: Provenance,
    r_a: f64,
    r: f64,
    opts: &SolverOptions,
) -> Result<CriticalPointRecord> {
    let g = gradient(l, path, bc)?;
    let morse = morse_index(l, bc, path, opts)?;
    Ok(CriticalPointRecord {
        provenance,
        action: g.action,
        gradient_norm: g.norm,
        morse_index: morse,
        conormal_residual: conormal_residual(bc, l, path),
        constraint_residual: bc.constraint_residual(path),
        max_speed: path.max_speed(),
        certificate: certify_solution(l, l0, path, r_a, r),
        path: path.to_record(),
    })
}

/// Keeps one record per cluster (C⁰ distance ≤ 1e−4 and action difference
/// ≤ 1e−6), sorted by action.
pub fn deduplicate(
    records: Vec<(CriticalPointRecord, DiscretePath)>,
) -> Vec<(CriticalPointRecord, DiscretePath)> {
    let mut sorted = records;
    sorted.sort_by(|a, b| a.0.action.total_cmp(&b.0.action));
    let mut kept: Vec<(CriticalPointRecord, DiscretePath)> = Vec::new();
    for (rec, path) in sorted {
        let duplicate = kept
            .iter()
            .any(|(k, kp)| (k.action - rec.action).abs() <= 1e-6 && kp.c0_distance(&path) <= 1e-4);
        if !duplicate {
            kept.push((rec, path));
        }
    }
    kept
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    pub segments: usize,
    pub solver: SolverOptions,
    pub grid: GridSpec,
    pub sample: SampleSpec,
    /// `A` = max family action + `action_margin`.
    pub action_margin: f64,
    /// `R` = `r_factor` · max(R_A, family speed).
    pub r_factor: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            segments: 128,
            solver: SolverOptions::default(),
            grid: GridSpec::default(),
            sample: SampleSpec::default(),
            action_margin: 1.0,
            r_factor: 1.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyOutcome {
    pub label: String,
    pub degree: usize,
    pub members: usize,
    pub initial_max: f64,
    /// `c_α(L₀)` estimate: the refined action under the modified Lagrangian.
    pub level: Option<f64>,
    pub rounds: usize,
    pub max_log: Vec<f64>,
    pub candidates_tried: usize,
    pub index_compatible: Option<bool>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModificationSummary {
    pub params: ModificationParams,
    pub passed: bool,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineResult {
    pub tonelli: TonelliReport,
    pub a: f64,
    pub c1: f64,
    pub family_max_speed: f64,
    pub reachable: ReachableSetEstimate,
    pub r: f64,
    pub modification: ModificationSummary,
    pub families: Vec<FamilyOutcome>,
    pub records: Vec<CriticalPointRecord>,
    pub distinct_certified: usize,
    /// Wall-clock seconds per stage; not part of deterministic output.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

struct Stopwatch {
    start: Instant,
    laps: Vec<(String, f64)>,
}

impl Stopwatch {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            laps: Vec::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.laps
            .push((name.to_string(), (now - self.start).as_secs_f64()));
        self.start = now;
    }
}

/// Tonelli checks → `A` → `R(A)` → `R` → modification → minimize/minimax on
/// `L₀` → certification and Morse indices under `L` → deduplication.
pub fn solve_pipeline(
    l: &Lagrangian,
    bc: &BoundaryCondition,
    families: &[SweepFamily],
    opts: &PipelineOptions,
) -> Result<PipelineResult> {
    if families.is_empty() {
        return Err(Error::InvalidInput(
            "solve_pipeline needs at least one family".into(),
        ));
    }
    let mut clock = Stopwatch::new();
    let tonelli = check_tonelli(l.as_ref(), &opts.sample).map_err(|e| e.in_stage("tonelli"))?;
    let c1 = tonelli.c1();
    clock.lap("tonelli");

    let n_family = opts
        .solver
        .family_segments
        .unwrap_or((opts.segments / 4).max(8));
    let mut prepared = Vec::with_capacity(families.len());
    let mut family_max = f64::NEG_INFINITY;
    let mut family_speed: f64 = 0.0;
    for f in families {
        let mesh = if f.degree == 0 {
            opts.segments
        } else {
            n_family
        };
        let mut g = f.resampled(mesh).map_err(|e| e.in_stage("families"))?;
        g.apply_bc(bc).map_err(|e| e.in_stage("families"))?;
        let acts = g.actions(l.as_ref()).map_err(|e| e.in_stage("families"))?;
        family_max = acts.iter().copied().fold(family_max, f64::max);
        family_speed = family_speed.max(g.max_speed());
        prepared.push(g);
    }
    let a = family_max + opts.action_margin;
    clock.lap("families");

    let reachable =
        estimate_r_a(l.as_ref(), a, c1, &opts.grid).map_err(|e| e.in_stage("estimate_r_a"))?;
    let r = opts.r_factor * reachable.r_a.max(family_speed);
    clock.lap("estimate_r_a");

    let modification = build_lagrangian_modification(l, r, c1, &opts.sample)
        .map_err(|e| e.in_stage("modification"))?;
    let l0 = modification.lagrangian();
    let summary = ModificationSummary {
        params: modification.params().clone(),
        passed: modification.report.passed(),
        failures: modification.report.failures(),
    };
    clock.lap("modification");

    let mut outcomes = Vec::new();
    let mut found = Vec::new();
    for fam in &prepared {
        let initial_max = fam
            .actions(l0.as_ref())
            .map(|a| a.into_iter().fold(f64::NEG_INFINITY, f64::max))
            .unwrap_or(f64::NAN);
        let mut outcome = FamilyOutcome {
            label: fam.label.clone(),
            degree: fam.degree,
            members: fam.members.len(),
            initial_max,
            level: None,
            rounds: 0,
            max_log: Vec::new(),
            candidates_tried: 0,
            index_compatible: None,
            error: None,
        };
        let solved = if fam.degree == 0 {
            minimize(l0.as_ref(), bc, &fam.members[0], &opts.solver).map(|r| {
                outcome.max_log = r.descent_log.clone();
                outcome.rounds = r.descent_log.len();
                outcome.level = Some(r.gradient.action);
                (
                    r.path,
                    Provenance::Minimum {
                        family: fam.label.clone(),
                    },
                )
            })
        } else {
            minimax(l0.as_ref(), bc, fam, opts.segments, &opts.solver).map(|mm| {
                outcome.level = Some(mm.level);
                outcome.rounds = mm.rounds;
                outcome.max_log = mm.family_max_log.clone();
                outcome.candidates_tried = mm.candidates_tried;
                outcome.index_compatible = Some(mm.index_compatible);
                (
                    mm.path,
                    Provenance::Minimax {
                        family: fam.label.clone(),
                        degree: fam.degree,
                        level: mm.level,
                        rounds: mm.rounds,
                        member: mm.member,
                    },
                )
            })
        };
        match solved.and_then(|(path, prov)| {
            let rec = build_record(
                l.as_ref(),
                l0.as_ref(),
                bc,
                &path,
                prov,
                reachable.r_a,
                r,
                &opts.solver,
            )?;
            Ok((rec, path))
        }) {
            Ok(x) => found.push(x),
            Err(e) => outcome.error = Some(e.to_string()),
        }
        outcomes.push(outcome);
    }
    clock.lap("solve");

    let records: Vec<CriticalPointRecord> =
        deduplicate(found).into_iter().map(|(r, _)| r).collect();
    let distinct_certified = records.iter().filter(|r| r.certified()).count();
    clock.lap("certify");
    Ok(PipelineResult {
        tonelli,
        a,
        c1,
        family_max_speed: family_speed,
        reachable,
        r,
        modification: summary,
        families: outcomes,
        records,
        distinct_certified,
        timings: clock.laps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_sphere2, build_torus, ChartPoint, RoundSphere};
    use crate::models::{PolynomialLagrangian, Potential, ScaledLagrangian};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn torus_model(eps: f64) -> PolynomialLagrangian {
        PolynomialLagrangian::mechanical(build_torus(2).unwrap(), Potential::Cos2 { epsilon: eps })
    }

    #[test]
    fn periodic_minimum_is_the_top_of_the_potential() {
        let l = torus_model(0.1);
        let m = l.manifold().clone();
        let seed =
            DiscretePath::constant(m.clone(), 64, &ChartPoint::new(0, &[0.12, 0.93])).unwrap();
        let seed = families::seeded_perturbation(&seed, 3, 0.05, true).unwrap();
        let r = minimize(
            &l,
            &BoundaryCondition::Periodic,
            &seed,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!((r.gradient.action + 0.2).abs() < 1e-9);
        assert!(r.gradient.norm < 1e-10);
        assert!(r.descent_log.windows(2).all(|w| w[1] <= w[0]));
        let (mi, _, _) = index_at(&l, &BoundaryCondition::Periodic, &r.path).unwrap();
        assert_eq!(mi, 0);
    }

    #[test]
    fn free_particle_between_fixed_endpoints() {
        let m = build_torus(2).unwrap();
        let l = PolynomialLagrangian::mechanical(m.clone(), Potential::Zero);
        let bc = BoundaryCondition::FixedEndpoints {
            q0: ChartPoint::new(0, &[0.0, 0.0]),
            q1: ChartPoint::new(0, &[0.3, 0.4]),
        };
        let seed = DiscretePath::from_fn(m.clone(), 32, |t| {
            ChartPoint::new(0, &[0.3 * t + 0.05 * (PI * t).sin(), 0.4 * t * t])
        })
        .unwrap();
        let r = minimize(&l, &bc, &seed, &SolverOptions::default()).unwrap();
        assert!((r.gradient.action - 0.125).abs() < 1e-12);
        for (i, x) in r.path.nodes.iter().enumerate() {
            let t = i as f64 / 32.0;
            assert!((x.coords[0] - 0.3 * t).abs() < 1e-9 && (x.coords[1] - 0.4 * t).abs() < 1e-9);
        }
    }

    #[test]
    fn newton_recovers_a_noisy_straight_line() {
        let m = build_torus(2).unwrap();
        let l = PolynomialLagrangian::mechanical(m.clone(), Potential::Zero);
        let bc = BoundaryCondition::FixedEndpoints {
            q0: ChartPoint::new(0, &[0.1, 0.1]),
            q1: ChartPoint::new(0, &[0.4, 0.2]),
        };
        let line = DiscretePath::from_fn(m.clone(), 20, |t| {
            ChartPoint::new(0, &[0.1 + 0.3 * t, 0.1 + 0.1 * t])
        })
        .unwrap();
        let noisy = families::seeded_perturbation(&line, 11, 1e-2, false).unwrap();
        let r = refine_newton(&l, &bc, &noisy, &SolverOptions::default()).unwrap();
        assert!(r.path.c0_distance(&line) < 1e-9);
    }

    #[test]
    fn newton_converges_to_a_saddle() {
        let l = torus_model(0.1);
        let m = l.manifold().clone();
        let seed = DiscretePath::constant(m, 32, &ChartPoint::new(0, &[0.01, 0.48])).unwrap();
        let r = refine_newton(
            &l,
            &BoundaryCondition::Periodic,
            &seed,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(r.gradient.action.abs() < 1e-10);
        let mi = morse_index(
            &l,
            &BoundaryCondition::Periodic,
            &r.path,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!((mi.m, mi.m_star), (1, 1));
        assert!(mi.stable);
    }

    #[test]
    fn constant_loop_indices_match_fourier_analysis() {
        let l = torus_model(0.1);
        let m = l.manifold().clone();
        let bc = BoundaryCondition::Periodic;
        let top = DiscretePath::constant(m.clone(), 32, &ChartPoint::new(0, &[0.0, 0.0])).unwrap();
        let bottom = DiscretePath::constant(m, 32, &ChartPoint::new(0, &[0.5, 0.5])).unwrap();
        assert_eq!(index_at(&l, &bc, &top).unwrap().0, 0);
        let (mi, ms, _) = index_at(&l, &bc, &bottom).unwrap();
        assert_eq!((mi, ms), (2, 2));
        // eigenvalue oracle
        let h = hessian(&l, &bottom, &bc).unwrap();
        let mut e: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        let nf = 32.0;
        assert!((e[0] + 4.0 * PI * PI * 0.1 / nf).abs() < 1e-9);
        assert!(e[2] > 0.0);
    }

    #[test]
    fn index_is_invariant_under_positive_scaling() {
        let l: Lagrangian = Arc::new(torus_model(0.1));
        let scaled = ScaledLagrangian {
            inner: l.clone(),
            factor: 3.5,
        };
        let m = l.manifold().clone();
        let p = DiscretePath::constant(m, 16, &ChartPoint::new(0, &[0.5, 0.0])).unwrap();
        let bc = BoundaryCondition::Periodic;
        let a = index_at(l.as_ref(), &bc, &p).unwrap();
        let b = index_at(&scaled, &bc, &p).unwrap();
        assert_eq!((a.0, a.1), (b.0, b.1));
        assert!(
            (action(&scaled, &p).unwrap() - 3.5 * action(l.as_ref(), &p).unwrap()).abs() < 1e-12
        );
    }

    #[test]
    fn sphere_geodesic_indices_count_conjugate_points() {
        let m = build_sphere2();
        let l = PolynomialLagrangian::mechanical(m.clone(), Potential::Zero);
        let s = RoundSphere::new();
        let (q0, q1) = (
            s.from_embedding([-0.5f64.sin(), 0.0, 0.5f64.cos()]),
            s.from_embedding([0.5f64.sin(), 0.0, 0.5f64.cos()]),
        );
        let bc = BoundaryCondition::FixedEndpoints {
            q0: q0.clone(),
            q1: q1.clone(),
        };
        for k in 0..3 {
            let fam = families::sphere_detour(&m, &q0, &q1, 0, 1, 0.0, 0.0, 64).unwrap();
            let seed = if k == 0 {
                fam.members[0].clone()
            } else {
                families::sphere_detour(&m, &q0, &q1, k, 3, 0.1, 0.0, 64)
                    .unwrap()
                    .members[if k == 1 { 1 } else { 4 }]
                .clone()
            };
            let r = refine_newton(&l, &bc, &seed, &SolverOptions::default()).unwrap();
            let (len, _) = families::great_circle_route(1.0, k);
            assert!(
                (r.gradient.action - len * len / 2.0).abs() < 1e-3 * len * len,
                "{k}: {}",
                r.gradient.action
            );
            let mi = morse_index(&l, &bc, &r.path, &SolverOptions::default()).unwrap();
            assert_eq!(mi.m, k);
            assert!(mi.stable && mi.m_star >= mi.m && mi.m_star - mi.m <= 4);
        }
    }

    #[test]
    fn deduplication_merges_equal_paths() {
        let l = torus_model(0.1);
        let m = l.manifold().clone();
        let p = DiscretePath::constant(m.clone(), 8, &ChartPoint::new(0, &[0.0, 0.0])).unwrap();
        let q = DiscretePath::constant(m, 8, &ChartPoint::new(0, &[0.5, 0.0])).unwrap();
        let bc = BoundaryCondition::Periodic;
        let opts = SolverOptions::default();
        let rec = |path: &DiscretePath| {
            let prov = Provenance::Minimum { family: "x".into() };
            (
                build_record(&l, &l, &bc, path, prov, 1.0, 2.0, &opts).unwrap(),
                path.clone(),
            )
        };
        let kept = deduplicate(vec![rec(&q), rec(&p), rec(&p)]);
        assert_eq!(kept.len(), 2);
        assert!(kept[0].0.action < kept[1].0.action);
    }
}
