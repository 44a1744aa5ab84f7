//! Sweep-family minimax: every member takes the same descent step, with the
//! step size chosen by an Armijo test on the family maximum, until the
//! maximum stalls. The highest members are then prolonged to the solution
//! mesh and Newton-refined.

use crate::error::{Error, Result};
use crate::geometry::Vector;
use crate::models::LagrangianModel;
use crate::pathspace::{
    action, gradient, BoundaryCondition, DiscretePath, Gradient, VariationSpace,
};

use super::families::{SweepFamily, Topology};
use super::{index_at, refine_newton, SolverOptions};

#[derive(Clone, Debug)]
pub struct MinimaxResult {
    /// Refined action: the estimate of the minimax level.
    pub level: f64,
    /// Family maximum after each round; nonincreasing.
    pub family_max_log: Vec<f64>,
    pub rounds: usize,
    pub snapshot: SweepFamily,
    pub path: DiscretePath,
    pub gradient: Gradient,
    pub member: usize,
    pub candidates_tried: usize,
    /// Whether `m ≤ degree ≤ m*` held for the extracted path.
    pub index_compatible: bool,
}

fn family_max(actions: &[f64]) -> (f64, usize) {
    actions
        .iter()
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |best, (i, &a)| {
            if a > best.0 {
                (a, i)
            } else {
                best
            }
        })
}

/// Chart-linear blend of two paths with equal meshes.
fn blend(
    bc: &BoundaryCondition,
    p: &DiscretePath,
    q: &DiscretePath,
    lambda: f64,
) -> Result<DiscretePath> {
    let m = p.manifold();
    let segs = p.segments();
    let delta: Vec<Vector> = p
        .nodes
        .iter()
        .zip(&q.nodes)
        .map(|(x, y)| m.displacement(x, y) * lambda)
        .collect();
    bc.apply(&p.displaced(&delta, |i| bc.rebases(i, segs))?)
}

/// Re-spaces the members of a one-parameter family at equal C⁰ distance.
fn redistribute(
    bc: &BoundaryCondition,
    members: &[DiscretePath],
    closed: bool,
) -> Result<Vec<DiscretePath>> {
    let k = members.len();
    let links = if closed { k } else { k - 1 };
    let gaps: Vec<f64> = (0..links)
        .map(|j| members[j].c0_distance(&members[(j + 1) % k]))
        .collect();
    let total: f64 = gaps.iter().sum();
    if total <= 0.0 {
        return Ok(members.to_vec());
    }
    let spacing = total / links as f64;
    let mut out = Vec::with_capacity(k);
    let mut j = 0;
    let mut start = 0.0;
    for i in 0..k {
        if !closed && i == k - 1 {
            out.push(members[k - 1].clone());
            break;
        }
        let target = i as f64 * spacing;
        while j + 1 < links && start + gaps[j] < target {
            start += gaps[j];
            j += 1;
        }
        let lambda = if gaps[j] > 0.0 {
            ((target - start) / gaps[j]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(blend(bc, &members[j], &members[(j + 1) % k], lambda)?);
    }
    Ok(out)
}

/// Re-spaces every parameter line of a grid family, one axis at a time.
fn redistribute_grid(
    bc: &BoundaryCondition,
    members: &[DiscretePath],
    shape: &[usize],
    closed: bool,
) -> Result<Vec<DiscretePath>> {
    let mut out = members.to_vec();
    for axis in 0..shape.len() {
        let k = shape[axis];
        if k < 2 || (!closed && k < 3) {
            continue;
        }
        let stride: usize = shape[axis + 1..].iter().product();
        for base in 0..out.len() {
            if !(base / stride).is_multiple_of(k) {
                continue;
            }
            let idx: Vec<usize> = (0..k).map(|j| base + j * stride).collect();
            let line: Vec<DiscretePath> = idx.iter().map(|&i| out[i].clone()).collect();
            for (i, p) in idx.into_iter().zip(redistribute(bc, &line, closed)?) {
                out[i] = p;
            }
        }
    }
    Ok(out)
}

/// Smallest C⁰ gap between neighbours along any parameter line.
fn min_gap(members: &[DiscretePath], shape: &[usize], closed: bool) -> f64 {
    let mut gap = f64::INFINITY;
    for axis in 0..shape.len() {
        let k = shape[axis];
        let stride: usize = shape[axis + 1..].iter().product();
        for (i, p) in members.iter().enumerate() {
            let j = (i / stride) % k;
            if j + 1 < k {
                gap = gap.min(p.c0_distance(&members[i + stride]));
            } else if closed && k > 1 {
                gap = gap.min(p.c0_distance(&members[i + stride - k * stride]));
            }
        }
    }
    gap
}

/// Deforms `family` on `l0` and extracts a critical path at `segments`.
pub fn minimax(
    l0: &dyn LagrangianModel,
    bc: &BoundaryCondition,
    family: &SweepFamily,
    segments: usize,
    opts: &SolverOptions,
) -> Result<MinimaxResult> {
    if family.members.is_empty() {
        return Err(Error::InvalidInput("empty sweep family".into()));
    }
    let mut fam = family.clone();
    fam.apply_bc(bc)?;
    let mut actions = fam.actions(l0)?;
    let mut log = vec![family_max(&actions).0];
    let mut alpha: f64 = 1.0;
    let mut rounds = 0;
    while rounds < opts.max_minimax_rounds {
        rounds += 1;
        let grads: Vec<Gradient> = fam
            .members
            .iter()
            .map(|p| gradient(l0, p, bc))
            .collect::<Result<_>>()?;
        let (m0, top) = family_max(&actions);
        let norm2 = grads[top].norm.powi(2);
        let respace =
            fam.degree >= 1 && opts.redistribute_every > 0 && rounds % opts.redistribute_every == 0;
        let mut step = (2.0 * alpha).min(1.0);
        let mut accepted = None;
        while step >= 1e-10 {
            if let Some((trial, acts)) = try_step(l0, bc, &fam, &grads, step, respace) {
                let m = family_max(&acts).0;
                if m <= m0 - 1e-4 * step * norm2 || (step < 2e-10 && m <= m0) {
                    accepted = Some((trial, acts));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((members, acts)) = accepted else {
            break;
        };
        alpha = step;
        fam.members = members;
        actions = acts;
        let current = family_max(&actions).0;
        if current < -1e12 || !current.is_finite() {
            return Err(Error::FamilyDiverged { level: current });
        }
        log.push(current);
        if rounds >= opts.stall_rounds && log[rounds - opts.stall_rounds] - current < opts.stall_tol
        {
            break;
        }
    }

    // candidates in decreasing action, skipping near-copies
    let mut order: Vec<usize> = (0..fam.members.len()).collect();
    order.sort_by(|&a, &b| actions[b].total_cmp(&actions[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = Vec::new();
    for i in order {
        if picked.len() >= opts.candidates.max(1) {
            break;
        }
        if picked
            .iter()
            .all(|&j| fam.members[j].c0_distance(&fam.members[i]) > 1e-3)
        {
            picked.push(i);
        }
    }
    let mut fallback = None;
    let mut last_error = None;
    for (tried, &i) in picked.iter().enumerate() {
        let fine = match fam.members[i].resample(segments).and_then(|p| bc.apply(&p)) {
            Ok(p) => p,
            Err(e) => {
                last_error = Some(e);
                continue;
            }
        };
        match refine_newton(l0, bc, &fine, opts) {
            Ok(r) => {
                let (m, m_star, _) = index_at(l0, bc, &r.path)?;
                let compatible = m <= fam.degree && fam.degree <= m_star;
                let result = MinimaxResult {
                    level: r.gradient.action,
                    family_max_log: log.clone(),
                    rounds,
                    snapshot: fam.clone(),
                    path: r.path,
                    gradient: r.gradient,
                    member: i,
                    candidates_tried: tried + 1,
                    index_compatible: compatible,
                };
                if compatible {
                    return Ok(result);
                }
                fallback.get_or_insert(result);
            }
            Err(e) => last_error = Some(e),
        }
    }
    match (fallback, last_error) {
        (Some(r), _) => Ok(r),
        (None, Some(e)) => Err(e.in_stage("minimax extraction")),
        (None, None) => Err(Error::InvalidInput("no minimax candidates".into())),
    }
}

fn try_step(
    l0: &dyn LagrangianModel,
    bc: &BoundaryCondition,
    fam: &SweepFamily,
    grads: &[Gradient],
    step: f64,
    respace: bool,
) -> Option<(Vec<DiscretePath>, Vec<f64>)> {
    // members may not overtake their neighbours, or the family tears
    let closed = fam.topology == Topology::Torus;
    let reach = if fam.degree >= 1 {
        0.5 * min_gap(&fam.members, &fam.shape, closed)
    } else {
        f64::INFINITY
    };
    let mut out = Vec::with_capacity(fam.members.len());
    for (p, g) in fam.members.iter().zip(grads) {
        let space = VariationSpace::new(bc, p);
        let segs = p.segments();
        let delta = space.expand(&(&g.riesz * -step));
        let q = p.displaced(&delta, |i| bc.rebases(i, segs)).ok()?;
        if q.c0_distance(p) > reach {
            return None;
        }
        out.push(q);
    }
    if respace {
        out = redistribute_grid(bc, &out, &fam.shape, closed).ok()?;
    }
    let acts = out
        .iter()
        .map(|p| action(l0, p))
        .collect::<Result<Vec<_>>>()
        .ok()?;
    Some((out, acts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_sphere2, build_torus, ChartPoint, RoundSphere};
    use crate::models::{PolynomialLagrangian, Potential};
    use crate::solver::families::{sphere_detour, sphere_pencil, torus_translation};
    use std::f64::consts::PI;

    #[test]
    fn translation_circle_finds_the_saddle() {
        let l = PolynomialLagrangian::mechanical(
            build_torus(2).unwrap(),
            Potential::Cos2 { epsilon: 0.1 },
        );
        let fam = torus_translation(l.manifold(), &[0], 0.37, 16, 32).unwrap();
        let r = minimax(
            &l,
            &BoundaryCondition::Periodic,
            &fam,
            32,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(r.level.abs() < 1e-9, "{}", r.level);
        assert!(r.index_compatible);
        assert!(r.family_max_log.windows(2).all(|w| w[1] <= w[0]));
        let x = &r.path.nodes[0].coords;
        assert!((x[0] - 0.5).abs() < 1e-6 && x[1].min(1.0 - x[1]) < 1e-6);
    }

    #[test]
    fn translation_grid_finds_the_maximum() {
        let l = PolynomialLagrangian::mechanical(
            build_torus(2).unwrap(),
            Potential::Cos2 { epsilon: 0.1 },
        );
        let fam = torus_translation(l.manifold(), &[0, 1], 0.37, 6, 16).unwrap();
        let r = minimax(
            &l,
            &BoundaryCondition::Periodic,
            &fam,
            32,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!((r.level - 0.2).abs() < 1e-9);
        assert!(r.index_compatible);
    }

    fn ends() -> (ChartPoint, ChartPoint) {
        let s = RoundSphere::new();
        (
            s.from_embedding([-0.5f64.sin(), 0.0, 0.5f64.cos()]),
            s.from_embedding([0.5f64.sin(), 0.0, 0.5f64.cos()]),
        )
    }

    #[test]
    fn pencil_finds_the_long_geodesic() {
        let m = build_sphere2();
        let l = PolynomialLagrangian::mechanical(m.clone(), Potential::Zero);
        let (q0, q1) = ends();
        let bc = BoundaryCondition::FixedEndpoints {
            q0: q0.clone(),
            q1: q1.clone(),
        };
        let fam = sphere_pencil(&m, &q0, &q1, 12, 24).unwrap();
        let r = minimax(&l, &bc, &fam, 48, &SolverOptions::default()).unwrap();
        let exact = (2.0 * PI - 1.0).powi(2) / 2.0;
        assert!((r.level - exact).abs() < 0.01 * exact, "{}", r.level);
        assert!(r.index_compatible);
    }

    #[test]
    fn detour_square_finds_the_index_two_geodesic() {
        let m = build_sphere2();
        let l = PolynomialLagrangian::mechanical(m.clone(), Potential::Zero);
        let (q0, q1) = ends();
        let bc = BoundaryCondition::FixedEndpoints {
            q0: q0.clone(),
            q1: q1.clone(),
        };
        let fam = sphere_detour(&m, &q0, &q1, 2, 5, 0.75, 0.1, 32).unwrap();
        let r = minimax(&l, &bc, &fam, 64, &SolverOptions::default()).unwrap();
        let exact = (2.0 * PI + 1.0).powi(2) / 2.0;
        assert!((r.level - exact).abs() < 0.01 * exact, "{}", r.level);
        assert!(r.index_compatible);
    }
}
