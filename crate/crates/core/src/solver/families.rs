//! Sweep families: finite grids of paths standing in for cycles of the path
//! space, plus the builtin generators for torus translation cycles and
//! sphere pencil/detour cycles.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, Manifold, RoundSphere};
use crate::models::LagrangianModel;
use crate::pathspace::{action, BoundaryCondition, DiscretePath};

/// Parameter domain of a family: a torus grid wraps around in every
/// direction, a cube grid includes both faces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Point,
    Torus,
    Cube,
}

#[derive(Clone, Debug)]
pub struct SweepFamily {
    pub label: String,
    pub degree: usize,
    pub topology: Topology,
    /// Grid points per parameter axis.
    pub shape: Vec<usize>,
    /// Members in row-major order over `shape`.
    pub members: Vec<DiscretePath>,
}

impl SweepFamily {
    pub fn seed(label: impl Into<String>, path: DiscretePath) -> Self {
        Self {
            label: label.into(),
            degree: 0,
            topology: Topology::Point,
            shape: vec![],
            members: vec![path],
        }
    }

    /// Evaluates `f` on the parameter grid. Torus parameters are `j/K`,
    /// cube parameters `j/(K−1)`.
    pub fn from_fn(
        label: impl Into<String>,
        topology: Topology,
        shape: Vec<usize>,
        f: impl Fn(&[f64]) -> Result<DiscretePath>,
    ) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&k| k < 2) {
            return Err(Error::InvalidInput(
                "a family grid needs at least two points per axis".into(),
            ));
        }
        let total: usize = shape.iter().product();
        let mut members = Vec::with_capacity(total);
        for idx in 0..total {
            let params = grid_params(idx, &shape, topology);
            members.push(f(&params)?);
        }
        Ok(Self {
            label: label.into(),
            degree: shape.len(),
            topology,
            shape,
            members,
        })
    }

    pub fn apply_bc(&mut self, bc: &BoundaryCondition) -> Result<()> {
        for p in self.members.iter_mut() {
            *p = bc.apply(p)?;
        }
        Ok(())
    }

    pub fn resampled(&self, segments: usize) -> Result<Self> {
        Ok(Self {
            members: self
                .members
                .iter()
                .map(|p| p.resample(segments))
                .collect::<Result<_>>()?,
            ..self.clone()
        })
    }

    pub fn actions(&self, l: &dyn LagrangianModel) -> Result<Vec<f64>> {
        self.members.iter().map(|p| action(l, p)).collect()
    }

    pub fn max_speed(&self) -> f64 {
        self.members
            .iter()
            .map(|p| p.max_speed())
            .fold(0.0, f64::max)
    }

    /// Grid neighbors of member `idx` along each axis (forward only).
    pub fn forward_neighbors(&self, idx: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stride = 1;
        let mut rem = idx;
        for &k in &self.shape {
            let j = rem % k;
            rem /= k;
            if j + 1 < k {
                out.push(idx + stride);
            } else if self.topology == Topology::Torus {
                out.push(idx + stride - k * stride);
            }
            stride *= k;
        }
        out
    }

    /// Largest C⁰ distance between grid neighbors.
    pub fn max_neighbor_distance(&self) -> f64 {
        (0..self.members.len())
            .flat_map(|i| self.forward_neighbors(i).into_iter().map(move |j| (i, j)))
            .map(|(i, j)| self.members[i].c0_distance(&self.members[j]))
            .fold(0.0, f64::max)
    }
}

fn grid_params(mut idx: usize, shape: &[usize], topology: Topology) -> Vec<f64> {
    shape
        .iter()
        .map(|&k| {
            let j = idx % k;
            idx /= k;
            match topology {
                Topology::Torus => j as f64 / k as f64,
                _ => j as f64 / (k - 1) as f64,
            }
        })
        .collect()
}

/// Smooth random perturbation keyed to `seed`: `Σ_k c_k sin(kπt)` per
/// coordinate, `k ≤ 3`, amplitudes up to `amplitude/k`.
pub fn seeded_perturbation(
    path: &DiscretePath,
    seed: u64,
    amplitude: f64,
    periodic: bool,
) -> Result<DiscretePath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = path.dim();
    let coeffs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (1..=3)
                .map(|k| rng.random_range(-1.0..1.0) * amplitude / k as f64)
                .collect()
        })
        .collect();
    let segs = path.segments();
    let delta: Vec<_> = (0..=segs)
        .map(|i| {
            let t = i as f64 / segs as f64;
            crate::geometry::Vector::from_fn(n, |c, _| {
                coeffs[c]
                    .iter()
                    .enumerate()
                    .map(|(k, a)| {
                        let k = (k + 1) as f64;
                        if periodic {
                            a * (2.0 * k * PI * t).sin()
                        } else {
                            a * (k * PI * t).sin()
                        }
                    })
                    .sum()
            })
        })
        .collect();
    path.displaced(&delta, |_| true)
}

/// Constant loops `q` with `q[axes[i]] = sᵢ` and every other coordinate at
/// `offset`, over a torus grid with `points` per axis.
pub fn torus_translation(
    manifold: &Manifold,
    axes: &[usize],
    offset: f64,
    points: usize,
    segments: usize,
) -> Result<SweepFamily> {
    let n = manifold.dim();
    if axes.is_empty() || axes.len() > 3 || axes.iter().any(|&a| a >= n) {
        return Err(Error::InvalidInput(format!(
            "translation family axes {axes:?} invalid for {}",
            manifold.name()
        )));
    }
    let label = format!(
        "translation[{}]",
        axes.iter()
            .map(|a| format!("q{a}"))
            .collect::<Vec<_>>()
            .join(",")
    );
    SweepFamily::from_fn(label, Topology::Torus, vec![points; axes.len()], |s| {
        let mut q = vec![offset; n];
        for (a, v) in axes.iter().zip(s) {
            q[*a] = *v;
        }
        DiscretePath::constant(manifold.clone(), segments, &ChartPoint::new(0, &q))
    })
}

fn unit(v: Vector3<f64>) -> Vector3<f64> {
    v / v.norm()
}

fn sphere_path(
    manifold: &Manifold,
    segments: usize,
    f: impl Fn(f64) -> Vector3<f64>,
) -> Result<DiscretePath> {
    let sphere = RoundSphere::new();
    DiscretePath::from_fn(manifold.clone(), segments, |t| {
        let p = unit(f(t));
        sphere.from_embedding([p.x, p.y, p.z])
    })
}

fn embedded(x: &ChartPoint) -> Result<Vector3<f64>> {
    if x.coords.len() != 2 {
        return Err(Error::InvalidInput(
            "sphere families need sphere2 endpoints".into(),
        ));
    }
    Ok(Vector3::from(RoundSphere::new().embed(x)))
}

/// Degree-1 pencil: all arcs from `q0` to `q1` on circles through both
/// points, traversed at constant speed. The arcs sweep `S²` once.
pub fn sphere_pencil(
    manifold: &Manifold,
    q0: &ChartPoint,
    q1: &ChartPoint,
    points: usize,
    segments: usize,
) -> Result<SweepFamily> {
    let (a, b) = (embedded(q0)?, embedded(q1)?);
    let cross = a.cross(&b);
    if cross.norm() < 1e-9 {
        return Err(Error::InvalidInput(
            "pencil endpoints must not be equal or antipodal".into(),
        ));
    }
    let mid = unit(a + b);
    let normal0 = unit(cross);
    let e1 = unit(b - a);
    let half = 0.5 * a.dot(&b).clamp(-1.0, 1.0).acos();
    SweepFamily::from_fn("pencil", Topology::Torus, vec![points], |s| {
        let sigma = 2.0 * PI * s[0];
        let (beta, dir) = if sigma < PI {
            (sigma - 0.5 * PI, 1.0)
        } else {
            (sigma - 1.5 * PI, -1.0)
        };
        let n = normal0 * beta.cos() + mid * beta.sin();
        let d = beta.sin() * half.cos();
        let center = n * d;
        let r = (1.0 - d * d).sqrt();
        let e2 = n.cross(&e1);
        let angle = |p: Vector3<f64>| {
            let rel = p - center;
            rel.dot(&e2).atan2(rel.dot(&e1))
        };
        let (phi0, phi1) = (angle(a), angle(b));
        let sweep = (dir * (phi1 - phi0)).rem_euclid(2.0 * PI);
        sphere_path(manifold, segments, |t| {
            let phi = phi0 + dir * sweep * t;
            center + (e1 * phi.cos() + e2 * phi.sin()) * r
        })
    })
}

/// Length of the `index`-th great-circle route from `q0` to `q1` at angle
/// `θ`: `θ, 2π−θ, 2π+θ, 4π−θ, …`, and whether it leaves in the short
/// direction.
pub fn great_circle_route(theta: f64, index: usize) -> (f64, bool) {
    let turns = index.div_ceil(2) as f64;
    if index.is_multiple_of(2) {
        (2.0 * PI * turns + theta, true)
    } else {
        (2.0 * PI * turns - theta, false)
    }
}

/// Cube family of degree `k` around the `k`-th great-circle route:
/// normal offsets `ξ(τ) = Σⱼ aⱼ sin(jπτ)` with `a` in the closed `ρ`-ball
/// (the cube mapped radially onto it) and a
/// non-uniform parameterization. Degree 0 yields a single detoured seed.
#[allow(clippy::too_many_arguments)]
pub fn sphere_detour(
    manifold: &Manifold,
    q0: &ChartPoint,
    q1: &ChartPoint,
    degree: usize,
    points: usize,
    rho: f64,
    reparam: f64,
    segments: usize,
) -> Result<SweepFamily> {
    let (a, b) = (embedded(q0)?, embedded(q1)?);
    let theta = a.dot(&b).clamp(-1.0, 1.0).acos();
    let along = b - a * a.dot(&b);
    if along.norm() < 1e-9 {
        return Err(Error::InvalidInput(
            "detour endpoints must not be equal or antipodal".into(),
        ));
    }
    let (length, short) = great_circle_route(theta, degree);
    let tangent = unit(along) * if short { 1.0 } else { -1.0 };
    let normal = a.cross(&tangent);
    let route = move |coeffs: &[f64]| {
        let coeffs = coeffs.to_vec();
        move |tau: f64| {
            let s = length * (tau + reparam * (2.0 * PI * tau).sin() / (2.0 * PI));
            let base = a * s.cos() + tangent * s.sin();
            let xi: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| c * ((j + 1) as f64 * PI * tau).sin())
                .sum();
            base * xi.cos() + normal * xi.sin()
        }
    };
    if degree == 0 {
        let path = sphere_path(manifold, segments, route(&[rho]))?;
        return Ok(SweepFamily::seed("detour[0]", path));
    }
    if degree > 3 {
        return Err(Error::InvalidInput(
            "families are supported up to degree 3".into(),
        ));
    }
    SweepFamily::from_fn(
        format!("detour[{degree}]"),
        Topology::Cube,
        vec![points; degree],
        |s| {
            // square the cube onto the ball of radius ρ
            let c: Vec<f64> = s.iter().map(|x| 2.0 * x - 1.0).collect();
            let sup = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let euclid = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = if euclid > 0.0 {
                rho * sup / euclid
            } else {
                0.0
            };
            let coeffs: Vec<f64> = c.iter().map(|x| x * scale).collect();
            sphere_path(manifold, segments, route(&coeffs))
        },
    )
}
