//! Euler–Lagrange and Hamiltonian flows, the reachable-set speed bound
//! `R(A)` and certification of critical paths as orbits of the original
//! Lagrangian.
//!
//! Integration uses the Dormand–Prince 5(4) pair with adaptive steps. The
//! state is carried in one chart; after every accepted step the base point is
//! rebased and the fiber part transported (`v′ = J v`, `p′ = J⁻ᵀ p`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cofiber_norm, fiber_norm, ChartPoint, Manifold, Vector};
use crate::models::checks::ScalarFn;
use crate::models::{HamiltonianModel, LagrangianModel, SampleSpec};
use crate::pathspace::{action, DiscretePath};

/// Phase-space state: `w` is a velocity for Lagrangian flows and a momentum
/// for Hamiltonian flows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub q: ChartPoint,
    #[serde(with = "crate::serde_vec")]
    pub w: Vector,
}

impl FlowState {
    pub fn new(t: f64, q: ChartPoint, w: &[f64]) -> Self {
        Self {
            t,
            q,
            w: Vector::from_column_slice(w),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Flow<'a> {
    Lagrangian(&'a dyn LagrangianModel),
    Hamiltonian(&'a dyn HamiltonianModel),
}

impl<'a> Flow<'a> {
    pub fn manifold(&self) -> &'a Manifold {
        match self {
            Flow::Lagrangian(l) => l.manifold(),
            Flow::Hamiltonian(h) => h.manifold(),
        }
    }

    fn assumption(&self) -> &'static str {
        match self {
            Flow::Lagrangian(_) => "L3",
            Flow::Hamiltonian(_) => "H3",
        }
    }

    /// Metric norm of the fiber component.
    pub fn fiber_size(&self, x: &FlowState) -> f64 {
        let g = self.manifold().metric(x.q.chart, &x.q.coords);
        match self {
            Flow::Lagrangian(_) => fiber_norm(&g, &x.w),
            Flow::Hamiltonian(_) => cofiber_norm(&g, &x.w),
        }
    }

    /// Energy `∂ᵥL[v] − L`, or `H`.
    pub fn invariant(&self, x: &FlowState) -> f64 {
        match self {
            Flow::Lagrangian(l) => {
                let f = l.first(x.t, x.q.chart, &x.q.coords, &x.w);
                f.d_v.dot(&x.w) - f.value
            }
            Flow::Hamiltonian(h) => h.value(x.t, x.q.chart, &x.q.coords, &x.w),
        }
    }

    /// Time derivative of `(q, w, ∫ integrand)`: the integrand is `L` or
    /// `p·∂ₚH − H`.
    fn rhs(&self, t: f64, chart: usize, y: &Vector) -> Result<Vector> {
        let n = (y.len() - 1) / 2;
        let q = y.rows(0, n).into_owned();
        let w = y.rows(n, n).into_owned();
        let mut out = Vector::zeros(2 * n + 1);
        match self {
            Flow::Lagrangian(l) => {
                let jet = l.jet(t, chart, &q, &w);
                let rhs = &jet.d_q - jet.d_qv.transpose() * &w - l.d_tv(t, chart, &q, &w);
                let acc = match jet.d_vv.clone().cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => jet
                        .d_vv
                        .lu()
                        .solve(&rhs)
                        .ok_or(Error::SingularFiberHessian { t })?,
                };
                out.rows_mut(0, n).copy_from(&w);
                out.rows_mut(n, n).copy_from(&acc);
                out[2 * n] = jet.value;
            }
            Flow::Hamiltonian(h) => {
                let f = h.first(t, chart, &q, &w);
                out.rows_mut(0, n).copy_from(&f.d_v);
                out.rows_mut(n, n).copy_from(&-&f.d_q);
                out[2 * n] = w.dot(&f.d_v) - f.value;
            }
        }
        Ok(out)
    }

    /// Moves the state to the chart chosen by rebasing.
    fn rebase(&self, chart: usize, y: &Vector) -> Result<(usize, Vector)> {
        let n = (y.len() - 1) / 2;
        let m = self.manifold();
        let x = ChartPoint {
            chart,
            coords: y.rows(0, n).into_owned(),
        };
        let moved = m.rebase(&x)?;
        if moved.chart == chart && moved.coords == x.coords {
            return Ok((chart, y.clone()));
        }
        let rep = m.represent(moved.chart, &moved.coords, &x);
        let w = y.rows(n, n).into_owned();
        let w = match (&rep.jacobian, self) {
            (None, _) => w,
            (Some(j), Flow::Lagrangian(_)) => j * w,
            (Some(j), Flow::Hamiltonian(_)) => j
                .clone()
                .transpose()
                .lu()
                .solve(&w)
                .ok_or_else(|| Error::InvalidInput("singular chart transition".into()))?,
        };
        let mut out = y.clone();
        out.rows_mut(0, n).copy_from(&moved.coords);
        out.rows_mut(n, n).copy_from(&w);
        Ok((moved.chart, out))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegratorOptions {
    /// Relative and absolute tolerance.
    pub tol: f64,
    pub max_steps: usize,
    pub initial_step: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_steps: 1_000_000,
            initial_step: 1e-3,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// One accepted step, with the conserved-quantity candidate and the action
/// accumulated since the start.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub chart: usize,
    pub q: Vec<f64>,
    pub w: Vec<f64>,
    pub invariant: f64,
    pub action: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<FlowState>,
    /// Running integral of `L` (or `p·∂ₚH − H`) at each state.
    pub action: Vec<f64>,
    pub rejected: usize,
}

impl Trajectory {
    pub fn last(&self) -> &FlowState {
        self.states
            .last()
            .expect("trajectory has its initial state")
    }

    pub fn total_action(&self) -> f64 {
        *self.action.last().unwrap_or(&0.0)
    }

    pub fn records(&self, flow: Flow) -> Vec<StepRecord> {
        self.states
            .iter()
            .zip(&self.action)
            .map(|(x, a)| StepRecord {
                t: x.t,
                chart: x.q.chart,
                q: x.q.coords.iter().copied().collect(),
                w: x.w.iter().copied().collect(),
                invariant: flow.invariant(x),
                action: *a,
            })
            .collect()
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates from `start` to `t1` (either direction), recording every
/// accepted step.
pub fn integrate_flow(
    flow: Flow,
    start: &FlowState,
    t1: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    let m = flow.manifold();
    let n = m.dim();
    if start.w.len() != n
        || !m.in_domain(start.q.chart, &start.q.coords)
        || start.w.iter().any(|c| !c.is_finite())
    {
        return Err(Error::InvalidInput(
            "flow state does not match the manifold".into(),
        ));
    }
    let mut y = Vector::zeros(2 * n + 1);
    y.rows_mut(0, n).copy_from(&start.q.coords);
    y.rows_mut(n, n).copy_from(&start.w);
    let (mut chart, y0) = flow.rebase(start.q.chart, &y)?;
    y = y0;
    let mut t = start.t;
    let dir = if t1 >= t { 1.0 } else { -1.0 };
    let span = (t1 - t).abs();
    let mut traj = Trajectory {
        states: vec![state_of(t, chart, &y, n)],
        action: vec![0.0],
        rejected: 0,
    };
    if span == 0.0 {
        return Ok(traj);
    }
    let mut h = opts.initial_step.min(span);
    let mut k: Vec<Vector> = Vec::with_capacity(7);
    let mut fsal: Option<Vector> = None;
    let mut steps = 0;
    while (t1 - t) * dir > 0.0 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepUnderflow {
                t,
                assumption: flow.assumption(),
            });
        }
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        let hs = if last { remaining } else { h };
        let step = hs * dir;
        k.clear();
        let trial = (|| -> Result<(Vector, Vector, f64)> {
            k.push(match fsal.take() {
                Some(f) => f,
                None => flow.rhs(t, chart, &y)?,
            });
            for s in 1..7 {
                let mut ys = y.clone();
                for (j, kj) in k.iter().enumerate().take(s) {
                    if A[s][j] != 0.0 {
                        ys.axpy(step * A[s][j], kj, 1.0);
                    }
                }
                k.push(flow.rhs(t + C[s] * step, chart, &ys)?);
                if s == 6 {
                    let mut err = Vector::zeros(y.len());
                    for (j, kj) in k.iter().enumerate() {
                        err.axpy(step * E[j], kj, 1.0);
                    }
                    let mut acc = 0.0;
                    for i in 0..y.len() {
                        let sc = opts.tol + opts.tol * y[i].abs().max(ys[i].abs());
                        acc += (err[i] / sc).powi(2);
                    }
                    let norm = (acc / y.len() as f64).sqrt();
                    return Ok((ys, k[6].clone(), norm));
                }
            }
            unreachable!()
        })();
        let (ynew, f_end, err) = match trial {
            Ok((ys, f, e)) if e.is_finite() && ys.iter().all(|c| c.is_finite()) => (ys, f, e),
            Ok(_)
            | Err(Error::SingularFiberHessian { .. })
            | Err(Error::LegendreDiverged { .. }) => (y.clone(), y.clone(), f64::INFINITY),
            Err(e) => return Err(e),
        };
        if err <= 1.0 {
            t = if last { t1 } else { t + step };
            let (c, yr) = flow.rebase(chart, &ynew)?;
            fsal = if c == chart && yr == ynew {
                Some(f_end)
            } else {
                None
            };
            chart = c;
            y = yr;
            traj.states.push(state_of(t, chart, &y, n));
            traj.action.push(y[2 * n]);
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = hs * factor;
        } else {
            traj.rejected += 1;
            fsal = None;
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.25
            };
            h = hs * factor;
            if h < 1e-12 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow {
                    t,
                    assumption: flow.assumption(),
                });
            }
        }
    }
    Ok(traj)
}

fn state_of(t: f64, chart: usize, y: &Vector, n: usize) -> FlowState {
    FlowState {
        t,
        q: ChartPoint {
            chart,
            coords: y.rows(0, n).into_owned(),
        },
        w: y.rows(n, n).into_owned(),
    }
}

/// Euler–Lagrange flow `v̇ = ∂ᵥᵥL⁻¹(∂_qL − ∂ₜ∂ᵥL − ∂_q∂ᵥL[v])`.
pub fn integrate(
    l: &dyn LagrangianModel,
    start: &FlowState,
    t1: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    integrate_flow(Flow::Lagrangian(l), start, t1, opts)
}

/// Hamiltonian flow `(q̇, ṗ) = (∂ₚH, −∂_qH)`.
pub fn hamiltonian_integrate(
    h: &dyn HamiltonianModel,
    start: &FlowState,
    t1: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    integrate_flow(Flow::Hamiltonian(h), start, t1, opts)
}

/// `𝔸_H` of the Hamiltonian orbit through `start` on `[start.t, t1]`.
pub fn hamiltonian_action(
    h: &dyn HamiltonianModel,
    start: &FlowState,
    t1: f64,
    opts: &IntegratorOptions,
) -> Result<f64> {
    Ok(hamiltonian_integrate(h, start, t1, opts)?.total_action())
}

/// Seed grid for the reachable-set estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub points_per_dim: usize,
    pub directions: usize,
    /// Nonzero speed levels in `(0, A + C₁]`; the zero fiber vector is
    /// always included.
    pub speed_levels: usize,
    /// Points per axis of the `(s, t)` grid on `[0,1]²`.
    pub time_grid: usize,
    pub margin: f64,
    pub tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points_per_dim: 9,
            directions: 8,
            speed_levels: 4,
            time_grid: 11,
            margin: 1.2,
            tol: 1e-8,
        }
    }
}

impl GridSpec {
    pub fn with_density(points_per_dim: usize) -> Self {
        Self {
            points_per_dim,
            ..Self::default()
        }
    }

    fn base_points(&self, m: &Manifold) -> Vec<(usize, Vector)> {
        SampleSpec {
            points_per_dim: self.points_per_dim,
            ..SampleSpec::default()
        }
        .base_points(m)
    }

    fn directions(&self, n: usize) -> Vec<Vector> {
        SampleSpec {
            directions: self.directions,
            ..SampleSpec::default()
        }
        .unit_directions(n)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReachableSetEstimate {
    pub a: f64,
    pub c1: f64,
    /// Radius of the seed ball (`A + C₁`, or the largest `|p|` with `a(|p|) ≤ A`).
    pub seed_radius: f64,
    pub grid: GridSpec,
    pub seeds: usize,
    /// Largest fiber norm seen over all propagations.
    pub max_speed: f64,
    pub margin: f64,
    pub r_a: f64,
}

/// `R(A)` for the Lagrangian flow: seeds `|v| ≤ A + C₁`, propagates through
/// `φₜ ∘ φₛ⁻¹` on the `(s, t)` grid and returns `margin · max |v|`.
pub fn estimate_r_a(
    l: &dyn LagrangianModel,
    a: f64,
    c1: f64,
    grid: &GridSpec,
) -> Result<ReachableSetEstimate> {
    let radius = (a + c1).max(0.0);
    let max_speed = propagate_seeds(Flow::Lagrangian(l), radius, l.autonomous(), grid)?;
    Ok(ReachableSetEstimate {
        a,
        c1,
        seed_radius: radius,
        grid: grid.clone(),
        seeds: seed_count(l.manifold(), grid, radius),
        max_speed,
        margin: grid.margin,
        r_a: grid.margin * max_speed,
    })
}

/// Hamiltonian analogue: seeds `a(|p|) ≤ A`, reports `margin · max |p|`.
pub fn estimate_r_a_hamiltonian(
    h: &dyn HamiltonianModel,
    a_bound: ScalarFn,
    a: f64,
    grid: &GridSpec,
) -> Result<ReachableSetEstimate> {
    let radius = sublevel_radius(a_bound, a);
    let max_speed = propagate_seeds(Flow::Hamiltonian(h), radius, h.autonomous(), grid)?;
    Ok(ReachableSetEstimate {
        a,
        c1: 0.0,
        seed_radius: radius,
        grid: grid.clone(),
        seeds: seed_count(h.manifold(), grid, radius),
        max_speed,
        margin: grid.margin,
        r_a: grid.margin * max_speed,
    })
}

/// Largest `s ≥ 0` with `a(s') ≤ A` for all `s' ≤ s` (bisection after a
/// doubling scan).
fn sublevel_radius(a_bound: ScalarFn, a: f64) -> f64 {
    if a_bound(0.0) > a {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while a_bound(hi) <= a {
        lo = hi;
        hi *= 2.0;
        if hi > 1e8 {
            return lo;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if a_bound(mid) <= a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn seed_count(m: &Manifold, grid: &GridSpec, radius: f64) -> usize {
    let per_point = if radius > 0.0 {
        1 + grid.directions(m.dim()).len() * grid.speed_levels
    } else {
        1
    };
    grid.base_points(m).len() * per_point
}

fn seeds(flow: Flow, radius: f64, grid: &GridSpec) -> Vec<(usize, Vector, Vector)> {
    let m = flow.manifold();
    let n = m.dim();
    let dirs = grid.directions(n);
    let mut out = Vec::new();
    for (chart, q) in grid.base_points(m) {
        let g = m.metric(chart, &q);
        let form = match flow {
            Flow::Lagrangian(_) => g,
            Flow::Hamiltonian(_) => g.try_inverse().expect("metric is positive definite"),
        };
        out.push((chart, q.clone(), Vector::zeros(n)));
        if radius > 0.0 {
            for d in &dirs {
                let unit = d / d.dot(&(&form * d)).sqrt();
                for k in 1..=grid.speed_levels {
                    let s = radius * k as f64 / grid.speed_levels as f64;
                    out.push((chart, q.clone(), &unit * s));
                }
            }
        }
    }
    out
}

fn propagate_seeds(flow: Flow, radius: f64, autonomous: bool, grid: &GridSpec) -> Result<f64> {
    let opts = IntegratorOptions::with_tol(grid.tol);
    let k = grid.time_grid.max(2);
    let times: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
    let seeds = seeds(flow, radius, grid);
    let maxima: Vec<Result<f64>> = seeds
        .par_iter()
        .map(|(chart, q, w)| {
            let x = ChartPoint {
                chart: *chart,
                coords: q.clone(),
            };
            // autonomous: φₜ ∘ φₛ⁻¹ = φ_{t−s}, and t − s covers [−1, 1]
            let starts: Vec<f64> = if autonomous { vec![0.0] } else { times.clone() };
            let mut best = flow.fiber_size(&FlowState {
                t: 0.0,
                q: x.clone(),
                w: w.clone(),
            });
            for s in starts {
                let start = FlowState {
                    t: s,
                    q: x.clone(),
                    w: w.clone(),
                };
                let ends = if autonomous { [1.0, -1.0] } else { [1.0, 0.0] };
                for end in ends {
                    let traj = integrate_flow(flow, &start, end, &opts)?;
                    for st in &traj.states {
                        best = best.max(flow.fiber_size(st));
                    }
                }
            }
            Ok(best)
        })
        .collect();
    let mut best: f64 = 0.0;
    for m in maxima {
        best = best.max(m?);
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CertificateStatus {
    Certified,
    Uncertified,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub status: CertificateStatus,
    pub max_speed: f64,
    pub r_a: f64,
    pub r: f64,
    pub action_modified: f64,
    pub action_original: f64,
    pub action_gap: f64,
    /// First segment whose speed breaks the bound.
    pub witness_segment: Option<usize>,
    pub reason: Option<String>,
}

impl Certificate {
    pub fn certified(&self) -> bool {
        self.status == CertificateStatus::Certified
    }
}

/// Checks `max speed ≤ R_A < R` and re-evaluates the action under the
/// original Lagrangian; the two actions must agree to `1e−9`.
pub fn certify_solution(
    l: &dyn LagrangianModel,
    l0: &dyn LagrangianModel,
    path: &DiscretePath,
    r_a: f64,
    r: f64,
) -> Certificate {
    let speeds = path.speeds();
    let max_speed = speeds.iter().copied().fold(0.0, f64::max);
    let witness_segment = speeds.iter().position(|&s| !(s <= r_a && s < r));
    let action_modified = action(l0, path).unwrap_or(f64::NAN);
    let action_original = action(l, path).unwrap_or(f64::NAN);
    let action_gap = (action_modified - action_original).abs();
    let reason = if let Some(i) = witness_segment {
        Some(format!(
            "segment {i} has speed {} exceeding min(R_A = {r_a}, R = {r})",
            speeds[i]
        ))
    } else if !(r_a < r) {
        Some(format!("R_A = {r_a} is not below R = {r}"))
    } else if !(action_gap < 1e-9) {
        Some(format!("actions under L0 and L differ by {action_gap:e}"))
    } else {
        None
    };
    Certificate {
        status: if reason.is_none() {
            CertificateStatus::Certified
        } else {
            CertificateStatus::Uncertified
        },
        max_speed,
        r_a,
        r,
        action_modified,
        action_original,
        action_gap,
        witness_segment,
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_sphere2, build_torus, RoundSphere};
    use crate::models::{FenchelDual, MechanicalHamiltonian, PolynomialLagrangian, Potential};
    use std::f64::consts::PI;

    fn pendulum() -> PolynomialLagrangian {
        PolynomialLagrangian::mechanical(build_torus(1).unwrap(), Potential::Cos2 { epsilon: -1.0 })
    }

    #[test]
    fn free_particle_moves_on_lines() {
        let m = build_torus(2).unwrap();
        let l = PolynomialLagrangian::mechanical(m, Potential::Zero);
        let x = FlowState::new(0.0, ChartPoint::new(0, &[0.1, 0.2]), &[1.3, -0.7]);
        let traj = integrate(&l, &x, 1.0, &IntegratorOptions::default()).unwrap();
        let end = traj.last();
        assert_eq!(end.t, 1.0);
        assert!((end.q.coords[0] - 0.4).abs() < 1e-10);
        assert!((end.q.coords[1] - 0.5).abs() < 1e-10);
        assert!((traj.total_action() - 0.5 * (1.69 + 0.49)).abs() < 1e-10);
    }

    #[test]
    fn pendulum_self_convergence_and_energy() {
        // L = v²/2 + cos(2πq), i.e. U = −cos(2πq)
        let l = pendulum();
        assert!(
            (l.value(
                0.0,
                0,
                &Vector::from_element(1, 0.0),
                &Vector::from_element(1, 0.0)
            ) - 1.0)
                .abs()
                < 1e-15
        );
        let x = FlowState::new(0.0, ChartPoint::new(0, &[0.1]), &[2.0]);
        let coarse = integrate(&l, &x, 1.0, &IntegratorOptions::with_tol(1e-9)).unwrap();
        let fine = integrate(&l, &x, 1.0, &IntegratorOptions::with_tol(1e-12)).unwrap();
        let m = l.manifold();
        assert!(m.distance(&coarse.last().q, &fine.last().q) < 1e-7);
        assert!((coarse.last().w[0] - fine.last().w[0]).abs() < 1e-7);
        let flow = Flow::Lagrangian(&l);
        let e0 = flow.invariant(&coarse.states[0]);
        let drift = coarse
            .states
            .iter()
            .map(|s| (flow.invariant(s) - e0).abs())
            .fold(0.0, f64::max);
        assert!(drift < 1e-8, "{drift}");
    }

    #[test]
    fn forward_then_backward_returns() {
        let l = pendulum();
        let opts = IntegratorOptions::default();
        let x = FlowState::new(0.0, ChartPoint::new(0, &[0.3]), &[-1.5]);
        let fwd = integrate(&l, &x, 1.0, &opts).unwrap();
        let back = integrate(&l, fwd.last(), 0.0, &opts).unwrap();
        let end = back.last();
        assert!(l.manifold().distance(&end.q, &x.q) < 10.0 * opts.tol * 10.0);
        assert!((end.w[0] - x.w[0]).abs() < 10.0 * opts.tol * 10.0);
    }

    #[test]
    fn hamiltonian_free_motion_keeps_momentum() {
        let m = build_torus(2).unwrap();
        let h = MechanicalHamiltonian::new(m, Potential::Zero);
        let x = FlowState::new(0.0, ChartPoint::new(0, &[0.9, 0.2]), &[0.5, 0.25]);
        let traj = hamiltonian_integrate(&h, &x, 1.0, &IntegratorOptions::default()).unwrap();
        let end = traj.last();
        assert!((&end.w - &x.w).amax() < 1e-12);
        assert!((end.q.coords[0] - 0.4).abs() < 1e-10);
    }

    #[test]
    fn sphere_geodesic_crosses_charts_at_constant_speed() {
        let m = build_sphere2();
        let l = PolynomialLagrangian::mechanical(m.clone(), Potential::Zero);
        // unit-speed great circle through the north pole: 2 rad in t ∈ [0, 1]
        let x = FlowState::new(0.0, ChartPoint::new(0, &[0.0, 0.0]), &[1.0, 0.0]);
        let traj = integrate(&l, &x, 2.0 * PI, &IntegratorOptions::default()).unwrap();
        assert!(traj.states.iter().any(|s| s.q.chart == 1));
        let flow = Flow::Lagrangian(&l);
        for s in &traj.states {
            assert!((flow.fiber_size(s) - 2.0).abs() < 1e-7);
        }
        // one full revolution returns to the pole
        assert!(m.distance(&traj.last().q, &x.q) < 1e-7);
        let sphere = RoundSphere::new();
        let p = sphere.embed(&traj.states[traj.states.len() / 2].q);
        assert!(p[1].abs() < 1e-7);
    }

    #[test]
    fn lagrangian_and_dual_flows_agree() {
        let m = build_sphere2();
        let l: crate::models::Lagrangian = std::sync::Arc::new(PolynomialLagrangian::quartic(
            m.clone(),
            1.0,
            1.0,
            Potential::Height { epsilon: 0.5 },
        ));
        let h = FenchelDual::new(l.clone());
        let q = ChartPoint::new(0, &[0.3, -0.2]);
        let v = Vector::from_vec(vec![0.8, 0.4]);
        let p = l.first(0.0, 0, &q.coords, &v).d_v;
        let opts = IntegratorOptions::with_tol(1e-10);
        let el = integrate(
            l.as_ref(),
            &FlowState {
                t: 0.0,
                q: q.clone(),
                w: v,
            },
            1.0,
            &opts,
        )
        .unwrap();
        let hm = hamiltonian_integrate(&h, &FlowState { t: 0.0, q, w: p }, 1.0, &opts).unwrap();
        let (a, b) = (el.last(), hm.last());
        assert!(m.distance(&a.q, &b.q) < 1e-6);
        let pa = l.first(1.0, a.q.chart, &a.q.coords, &a.w).d_v;
        let pb = if b.q.chart == a.q.chart {
            b.w.clone()
        } else {
            panic!("different charts")
        };
        assert!((pa - pb).amax() < 1e-6);
        // both actions are ∫L along the orbit
        assert!((el.total_action() - hm.total_action()).abs() < 1e-6);
    }

    #[test]
    fn free_particle_reachable_set() {
        let l = PolynomialLagrangian::mechanical(build_torus(2).unwrap(), Potential::Zero);
        let est = estimate_r_a(&l, 2.0, 0.5, &GridSpec::default()).unwrap();
        assert!((est.r_a - 3.0).abs() < 1e-9, "{}", est.r_a);
        assert!(est.r_a >= est.a + est.c1);
    }

    #[test]
    fn mechanical_reachable_set_bound_and_monotonicity() {
        let eps = 0.1;
        let l = PolynomialLagrangian::mechanical(
            build_torus(2).unwrap(),
            Potential::Cos2 { epsilon: eps },
        );
        let grid = GridSpec::with_density(5);
        let lo = estimate_r_a(&l, 1.0, 0.7, &grid).unwrap();
        let hi = estimate_r_a(&l, 2.0, 0.7, &grid).unwrap();
        assert!(lo.r_a <= hi.r_a);
        // |v̇| ≤ max|∇U| = 2π ε √2 over unit time
        let grad_max = 2.0 * PI * eps * 2f64.sqrt();
        assert!(lo.max_speed <= 1.7 + grad_max);
        assert!(lo.r_a <= 1.2 * (1.7 + grad_max));
        let empty = estimate_r_a(&l, -5.0, 0.7, &grid).unwrap();
        assert!(empty.r_a >= 0.0);
    }

    #[test]
    fn hamiltonian_reachable_set_uses_sublevel_radius() {
        let h = MechanicalHamiltonian::new(build_torus(1).unwrap(), Potential::Zero);
        let a = |s: f64| s - 1.0;
        let est = estimate_r_a_hamiltonian(&h, &a, 2.0, &GridSpec::default()).unwrap();
        assert!((est.seed_radius - 3.0).abs() < 1e-9);
        assert!((est.r_a - 3.6).abs() < 1e-9);
    }

    #[test]
    fn certificates() {
        let m = build_torus(2).unwrap();
        let l = PolynomialLagrangian::mechanical(m.clone(), Potential::Zero);
        let constant =
            DiscretePath::constant(m.clone(), 8, &ChartPoint::new(0, &[0.2, 0.2])).unwrap();
        let c = certify_solution(&l, &l, &constant, 0.1, 0.2);
        assert!(c.certified() && c.max_speed == 0.0);
        let moving = DiscretePath::from_fn(m, 8, |t| ChartPoint::new(0, &[0.4 * t, 0.0])).unwrap();
        let c = certify_solution(&l, &l, &moving, 1.0, 0.3);
        assert!(!c.certified());
        assert_eq!(c.witness_segment, Some(0));
    }
}
