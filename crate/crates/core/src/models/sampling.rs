//! Deterministic phase-space samples for the sampled condition checks.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{Manifold, RoundSphere, Vector};

/// Sample layout: base points × unit directions × speed levels × times.
///
/// Speeds are `i·v_max/(speeds−1)` for `i = 0..speeds`, measured in the
/// metric (or co-metric for momenta). Torus base points form a regular grid
/// with `points_per_dim` nodes per axis; sphere points form a Fibonacci
/// lattice with `points_per_dim²` points plus both poles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSpec {
    pub v_max: f64,
    pub speeds: usize,
    pub points_per_dim: usize,
    pub directions: usize,
    pub times: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            v_max: 10.0,
            speeds: 101,
            points_per_dim: 8,
            directions: 8,
            times: 4,
        }
    }
}

/// One sampled point `(t, chart, q, w)` with `|w| = speed`.
#[derive(Clone, Debug)]
pub struct PhaseSample {
    pub t: f64,
    pub chart: usize,
    pub q: Vector,
    pub w: Vector,
    pub speed: f64,
}

impl SampleSpec {
    pub fn with_v_max(v_max: f64) -> Self {
        Self {
            v_max,
            ..Self::default()
        }
    }

    pub fn coarse(v_max: f64) -> Self {
        Self {
            v_max,
            speeds: 41,
            points_per_dim: 5,
            directions: 6,
            times: 3,
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "|w| <= {} in {} levels, {} points/dim, {} directions, {} times (sampled: necessary, not sufficient)",
            self.v_max, self.speeds, self.points_per_dim, self.directions, self.times
        )
    }

    pub fn speed_levels(&self) -> Vec<f64> {
        let k = self.speeds.max(2);
        (0..k)
            .map(|i| i as f64 * self.v_max / (k - 1) as f64)
            .collect()
    }

    pub fn time_levels(&self, autonomous: bool) -> Vec<f64> {
        if autonomous {
            return vec![0.0];
        }
        let k = self.times.max(1);
        (0..k).map(|i| i as f64 / k as f64).collect()
    }

    /// Base points as `(chart, coords)`.
    pub fn base_points(&self, m: &Manifold) -> Vec<(usize, Vector)> {
        let n = m.dim();
        let k = self.points_per_dim.max(1);
        if m.name() == "sphere2" {
            let sphere = RoundSphere::new();
            let count = k * k;
            let golden = PI * (3.0 - 5f64.sqrt());
            let mut out: Vec<[f64; 3]> = vec![[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
            for i in 0..count {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let a = golden * i as f64;
                out.push([r * a.cos(), r * a.sin(), z]);
            }
            return out
                .into_iter()
                .map(|p| {
                    let x = sphere.from_embedding(p);
                    (x.chart, x.coords)
                })
                .collect();
        }
        let total = k.pow(n as u32);
        (0..total)
            .map(|mut idx| {
                let mut q = Vector::zeros(n);
                for i in 0..n {
                    q[i] = (idx % k) as f64 / k as f64;
                    idx /= k;
                }
                (0, q)
            })
            .collect()
    }

    /// Euclidean unit directions in coordinate space.
    pub fn unit_directions(&self, n: usize) -> Vec<Vector> {
        match n {
            1 => vec![Vector::from_element(1, 1.0), Vector::from_element(1, -1.0)],
            2 => {
                let k = self.directions.max(1);
                (0..k)
                    .map(|i| {
                        let a = 2.0 * PI * (i as f64 + 0.25) / k as f64;
                        Vector::from_vec(vec![a.cos(), a.sin()])
                    })
                    .collect()
            }
            _ => {
                let mut out = Vec::new();
                for i in 0..n {
                    for s in [1.0, -1.0] {
                        let mut e = Vector::zeros(n);
                        e[i] = s;
                        out.push(e);
                    }
                }
                let d = Vector::from_element(n, 1.0 / (n as f64).sqrt());
                out.push(d.clone());
                out.push(-d);
                out
            }
        }
    }

    /// Tangent samples `w = v` normalized in the metric.
    pub fn tangent_samples(&self, m: &Manifold, autonomous: bool) -> Vec<PhaseSample> {
        self.samples(m, autonomous, false)
    }

    /// Cotangent samples `w = p` normalized in the co-metric.
    pub fn cotangent_samples(&self, m: &Manifold, autonomous: bool) -> Vec<PhaseSample> {
        self.samples(m, autonomous, true)
    }

    fn samples(&self, m: &Manifold, autonomous: bool, co: bool) -> Vec<PhaseSample> {
        let dirs = self.unit_directions(m.dim());
        let speeds = self.speed_levels();
        let times = self.time_levels(autonomous);
        let mut out = Vec::new();
        for (chart, q) in self.base_points(m) {
            let g = m.metric(chart, &q);
            let form = if co {
                g.clone()
                    .try_inverse()
                    .expect("metric is positive definite")
            } else {
                g
            };
            for d in &dirs {
                let unit = d / d.dot(&(&form * d)).sqrt();
                for &t in &times {
                    for &s in &speeds {
                        out.push(PhaseSample {
                            t,
                            chart,
                            q: q.clone(),
                            w: &unit * s,
                            speed: s,
                        });
                    }
                }
            }
        }
        out
    }
}
