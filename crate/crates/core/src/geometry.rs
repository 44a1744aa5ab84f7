//! Charts, Riemannian metrics and tangent/cotangent algebra for the
//! supported compact configuration spaces: the flat torus `ℝⁿ/ℤⁿ` and the
//! round unit sphere `S²` covered by two stereographic charts.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// A point of the manifold expressed in one chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: usize,
    #[serde(with = "crate::serde_vec")]
    pub coords: Vector,
}

impl ChartPoint {
    pub fn new(chart: usize, coords: &[f64]) -> Self {
        Self {
            chart,
            coords: Vector::from_column_slice(coords),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variance {
    Tangent,
    Cotangent,
}

/// Tangent or cotangent vector with its base point.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberVector {
    pub base: ChartPoint,
    pub components: Vector,
    pub variance: Variance,
}

pub type TangentVector = FiberVector;
pub type CotangentVector = FiberVector;

impl FiberVector {
    pub fn tangent(base: ChartPoint, components: &[f64]) -> Self {
        Self {
            base,
            components: Vector::from_column_slice(components),
            variance: Variance::Tangent,
        }
    }

    pub fn cotangent(base: ChartPoint, components: &[f64]) -> Self {
        Self {
            base,
            components: Vector::from_column_slice(components),
            variance: Variance::Cotangent,
        }
    }
}

/// Chart descriptor. The domain of each builtin chart is all of `ℝⁿ`
/// (universal cover for the torus, stereographic plane for the sphere);
/// `central_radius` bounds the region where rebasing leaves points alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub id: usize,
    pub name: String,
    pub central_radius: f64,
}

/// Coordinates of a point re-expressed in another chart together with the
/// derivatives of that change of coordinates. `None` derivatives mean the
/// identity map (up to a constant translation).
#[derive(Clone, Debug)]
pub struct Representation {
    pub coords: Vector,
    pub jacobian: Option<Matrix>,
    /// `second[i]` is the Hessian of the i-th output coordinate.
    pub second: Option<Vec<Matrix>>,
}

/// Christoffel symbols `gamma[k][(i, j)] = Γᵏᵢⱼ`.
#[derive(Clone, Debug)]
pub struct Christoffel {
    pub gamma: Vec<Matrix>,
}

impl Christoffel {
    /// `Γ(u, w)ᵏ = Γᵏᵢⱼ uⁱ wʲ`.
    pub fn contract(&self, u: &Vector, w: &Vector) -> Vector {
        Vector::from_iterator(self.gamma.len(), self.gamma.iter().map(|g| u.dot(&(g * w))))
    }
}

pub trait ManifoldModel: Send + Sync + Debug {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn charts(&self) -> &[Chart];
    fn injectivity_radius(&self) -> f64;

    fn in_domain(&self, chart: usize, coords: &Vector) -> bool {
        chart < self.charts().len()
            && coords.len() == self.dim()
            && coords.iter().all(|c| c.is_finite())
    }

    /// Re-express `x` in `chart`, choosing the representative closest to
    /// `anchor` when the chart has self-overlaps (torus lifts).
    fn represent(&self, chart: usize, anchor: &Vector, x: &ChartPoint) -> Representation;

    /// Move `x` to the chart that contains it most centrally. Identity for
    /// points already central.
    fn rebase(&self, x: &ChartPoint) -> Result<ChartPoint>;

    fn metric(&self, chart: usize, q: &Vector) -> Matrix;

    /// `out[k] = ∂g/∂qₖ`.
    fn metric_derivatives(&self, chart: usize, q: &Vector) -> Vec<Matrix> {
        metric_derivatives_fd(self, chart, q)
    }

    /// `out[k][l] = ∂²g/∂qₖ∂qₗ`.
    fn metric_second_derivatives(&self, chart: usize, q: &Vector) -> Vec<Vec<Matrix>> {
        metric_second_derivatives_fd(self, chart, q)
    }

    fn christoffel(&self, chart: usize, q: &Vector) -> Christoffel {
        christoffel_from_metric(&self.metric(chart, q), &self.metric_derivatives(chart, q))
    }

    fn exp_map(&self, x: &ChartPoint, v: &Vector) -> Result<ChartPoint>;

    fn distance(&self, x: &ChartPoint, y: &ChartPoint) -> f64;

    /// Coordinates of `y` minus coordinates of `x`, both in `x`'s chart.
    fn displacement(&self, x: &ChartPoint, y: &ChartPoint) -> Vector {
        self.represent(x.chart, &x.coords, y).coords - &x.coords
    }

    /// `x + dq` in `x`'s chart, followed by rebasing.
    fn translate(&self, x: &ChartPoint, dq: &Vector) -> Result<ChartPoint> {
        self.rebase(&ChartPoint {
            chart: x.chart,
            coords: &x.coords + dq,
        })
    }
}

pub type Manifold = Arc<dyn ManifoldModel>;

/// Builds the manifold selected by a config name: `torus<n>` or `sphere2`.
pub fn manifold_by_name(name: &str) -> Result<Manifold> {
    if name == "sphere2" {
        return Ok(build_sphere2());
    }
    if let Some(rest) = name.strip_prefix("torus") {
        let n: usize = rest
            .parse()
            .map_err(|_| Error::Config(format!("unknown manifold `{name}`")))?;
        return build_torus(n);
    }
    Err(Error::Config(format!("unknown manifold `{name}`")))
}

pub fn build_torus(n: usize) -> Result<Manifold> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "torus dimension must be positive".into(),
        ));
    }
    Ok(Arc::new(FlatTorus::new(n)))
}

pub fn build_sphere2() -> Manifold {
    Arc::new(RoundSphere::new())
}

/// Riemannian norm `sqrt(vᵀ g v)`, or `sqrt(pᵀ g⁻¹ p)` for covectors.
pub fn norm(m: &dyn ManifoldModel, x: &ChartPoint, v: &FiberVector) -> Result<f64> {
    if v.base.chart != x.chart || (&v.base.coords - &x.coords).amax() > 1e-12 {
        return Err(Error::ChartMismatch {
            point: x.chart,
            vector: v.base.chart,
        });
    }
    let g = m.metric(x.chart, &x.coords);
    Ok(match v.variance {
        Variance::Tangent => fiber_norm(&g, &v.components),
        Variance::Cotangent => cofiber_norm(&g, &v.components),
    })
}

pub fn fiber_norm(g: &Matrix, v: &Vector) -> f64 {
    v.dot(&(g * v)).max(0.0).sqrt()
}

pub fn cofiber_norm(g: &Matrix, p: &Vector) -> f64 {
    let ginv = g.clone().try_inverse().expect("metric must be invertible");
    p.dot(&(ginv * p)).max(0.0).sqrt()
}

/// Transports the components of a (co)vector into another chart.
pub fn change_chart(m: &dyn ManifoldModel, v: &FiberVector, chart: usize) -> Result<FiberVector> {
    let rep = m.represent(chart, &v.base.coords, &v.base);
    let components = match (&rep.jacobian, v.variance) {
        (None, _) => v.components.clone(),
        (Some(j), Variance::Tangent) => j * &v.components,
        (Some(j), Variance::Cotangent) => {
            let jt_inv = j
                .transpose()
                .try_inverse()
                .ok_or_else(|| Error::InvalidInput("singular transition Jacobian".into()))?;
            jt_inv * &v.components
        }
    };
    Ok(FiberVector {
        base: ChartPoint {
            chart,
            coords: rep.coords,
        },
        components,
        variance: v.variance,
    })
}

/// Central-difference step used for the finite-difference fallbacks.
fn fd_step(q: &Vector) -> f64 {
    1e-5 * (1.0 + q.norm())
}

pub fn metric_derivatives_fd<M: ManifoldModel + ?Sized>(
    m: &M,
    chart: usize,
    q: &Vector,
) -> Vec<Matrix> {
    let h = fd_step(q);
    (0..q.len())
        .map(|k| {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            (m.metric(chart, &qp) - m.metric(chart, &qm)) / (2.0 * h)
        })
        .collect()
}

pub fn metric_second_derivatives_fd<M: ManifoldModel + ?Sized>(
    m: &M,
    chart: usize,
    q: &Vector,
) -> Vec<Vec<Matrix>> {
    let h = fd_step(q);
    (0..q.len())
        .map(|k| {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            let dp = m.metric_derivatives(chart, &qp);
            let dm = m.metric_derivatives(chart, &qm);
            dp.iter()
                .zip(&dm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect()
        })
        .collect()
}

/// `Γᵏᵢⱼ = ½ gᵏˡ (∂ᵢgⱼₗ + ∂ⱼgᵢₗ − ∂ₗgᵢⱼ)`.
pub fn christoffel_from_metric(g: &Matrix, dg: &[Matrix]) -> Christoffel {
    let n = g.nrows();
    let ginv = g.clone().try_inverse().expect("metric must be invertible");
    let mut lowered = vec![Matrix::zeros(n, n); n];
    for (l, low) in lowered.iter_mut().enumerate() {
        for i in 0..n {
            for j in 0..n {
                low[(i, j)] = 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
            }
        }
    }
    let gamma = (0..n)
        .map(|k| {
            let mut gk = Matrix::zeros(n, n);
            for (l, low) in lowered.iter().enumerate() {
                gk += low * ginv[(k, l)];
            }
            gk
        })
        .collect();
    Christoffel { gamma }
}

/// Gaussian curvature of a 2-dimensional chart metric, from finite
/// differences of the Christoffel symbols.
pub fn gaussian_curvature(m: &dyn ManifoldModel, chart: usize, q: &Vector) -> f64 {
    assert_eq!(m.dim(), 2, "Gaussian curvature needs a surface");
    let h = fd_step(q);
    let gam = |q: &Vector| m.christoffel(chart, q).gamma;
    let mut dgam = Vec::with_capacity(2);
    for k in 0..2 {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[k] += h;
        qm[k] -= h;
        let gp = gam(&qp);
        let gm = gam(&qm);
        dgam.push(
            gp.iter()
                .zip(&gm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<_>>(),
        );
    }
    let g0 = gam(q);
    // Rˡᵢⱼₖ = ∂ⱼΓˡᵢₖ − ∂ₖΓˡᵢⱼ + ΓˡⱼₘΓᵐᵢₖ − ΓˡₖₘΓᵐᵢⱼ with (i,j,k) = (1,0,1).
    let riemann = |l: usize, i: usize, j: usize, k: usize| {
        let mut r = dgam[j][l][(i, k)] - dgam[k][l][(i, j)];
        for mm in 0..2 {
            r += g0[l][(j, mm)] * g0[mm][(i, k)] - g0[l][(k, mm)] * g0[mm][(i, j)];
        }
        r
    };
    let g = m.metric(chart, q);
    // R₀₁₀₁ = g₀ₗ Rˡ₁₀₁
    let r0101: f64 = (0..2).map(|l| g[(0, l)] * riemann(l, 1, 0, 1)).sum();
    r0101 / g.determinant()
}

/// Flat torus `ℝⁿ/ℤⁿ` with the identity metric, one chart whose
/// canonical representatives live in `[0,1)ⁿ`.
#[derive(Debug)]
pub struct FlatTorus {
    n: usize,
    charts: Vec<Chart>,
}

impl FlatTorus {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            charts: vec![Chart {
                id: 0,
                name: "periodic".into(),
                central_radius: f64::INFINITY,
            }],
        }
    }
}

fn unit_interval(c: f64) -> f64 {
    let r = c.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Nearest-integer wrap into `[-1/2, 1/2]`.
pub fn wrap(d: f64) -> f64 {
    d - d.round()
}

impl ManifoldModel for FlatTorus {
    fn name(&self) -> String {
        format!("torus{}", self.n)
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn charts(&self) -> &[Chart] {
        &self.charts
    }

    fn injectivity_radius(&self) -> f64 {
        0.5
    }

    fn represent(&self, _chart: usize, anchor: &Vector, x: &ChartPoint) -> Representation {
        let coords = Vector::from_iterator(
            self.n,
            anchor
                .iter()
                .zip(x.coords.iter())
                .map(|(a, c)| a + wrap(c - a)),
        );
        Representation {
            coords,
            jacobian: None,
            second: None,
        }
    }

    fn rebase(&self, x: &ChartPoint) -> Result<ChartPoint> {
        if !self.in_domain(x.chart, &x.coords) {
            return Err(Error::OutsideCharts {
                coords: x.coords.iter().copied().collect(),
            });
        }
        Ok(ChartPoint {
            chart: 0,
            coords: x.coords.map(unit_interval),
        })
    }

    fn metric(&self, _chart: usize, _q: &Vector) -> Matrix {
        Matrix::identity(self.n, self.n)
    }

    fn metric_derivatives(&self, _chart: usize, _q: &Vector) -> Vec<Matrix> {
        vec![Matrix::zeros(self.n, self.n); self.n]
    }

    fn metric_second_derivatives(&self, _chart: usize, _q: &Vector) -> Vec<Vec<Matrix>> {
        vec![vec![Matrix::zeros(self.n, self.n); self.n]; self.n]
    }

    fn christoffel(&self, _chart: usize, _q: &Vector) -> Christoffel {
        Christoffel {
            gamma: vec![Matrix::zeros(self.n, self.n); self.n],
        }
    }

    fn exp_map(&self, x: &ChartPoint, v: &Vector) -> Result<ChartPoint> {
        self.translate(x, v)
    }

    fn distance(&self, x: &ChartPoint, y: &ChartPoint) -> f64 {
        x.coords
            .iter()
            .zip(y.coords.iter())
            .map(|(a, b)| wrap(b - a).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Round unit sphere. Chart 0 is stereographic projection from the south
/// pole (centered at the north pole), chart 1 projects from the north pole.
/// Both carry the metric `4/(1+|q|²)² I`; the transition is `q ↦ q/|q|²`.
#[derive(Debug)]
pub struct RoundSphere {
    charts: Vec<Chart>,
}

pub const SPHERE_SWITCH_RADIUS: f64 = 2.0;

impl RoundSphere {
    pub fn new() -> Self {
        Self {
            charts: vec![
                Chart {
                    id: 0,
                    name: "north".into(),
                    central_radius: SPHERE_SWITCH_RADIUS,
                },
                Chart {
                    id: 1,
                    name: "south".into(),
                    central_radius: SPHERE_SWITCH_RADIUS,
                },
            ],
        }
    }

    fn pole_sign(chart: usize) -> f64 {
        if chart == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Point of the unit sphere in `ℝ³`.
    pub fn embed(&self, x: &ChartPoint) -> [f64; 3] {
        let (a, b) = (x.coords[0], x.coords[1]);
        let r2 = a * a + b * b;
        let d = 1.0 + r2;
        [
            2.0 * a / d,
            2.0 * b / d,
            Self::pole_sign(x.chart) * (1.0 - r2) / d,
        ]
    }

    /// Differential of [`RoundSphere::embed`] (3×2).
    pub fn embed_jacobian(&self, x: &ChartPoint) -> nalgebra::Matrix3x2<f64> {
        let (a, b) = (x.coords[0], x.coords[1]);
        let r2 = a * a + b * b;
        let d = 1.0 + r2;
        let d2 = d * d;
        let s = Self::pole_sign(x.chart);
        nalgebra::Matrix3x2::new(
            2.0 / d - 4.0 * a * a / d2,
            -4.0 * a * b / d2,
            -4.0 * a * b / d2,
            2.0 / d - 4.0 * b * b / d2,
            -s * 4.0 * a / d2,
            -s * 4.0 * b / d2,
        )
    }

    /// Chart point for a unit vector of `ℝ³`, in the chart centered on the
    /// nearer pole.
    pub fn from_embedding(&self, p: [f64; 3]) -> ChartPoint {
        let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let (x, y, z) = (p[0] / n, p[1] / n, p[2] / n);
        if z >= 0.0 {
            ChartPoint::new(0, &[x / (1.0 + z), y / (1.0 + z)])
        } else {
            ChartPoint::new(1, &[x / (1.0 - z), y / (1.0 - z)])
        }
    }

    fn inversion(q: &Vector) -> Representation {
        let r2 = q.norm_squared();
        let r4 = r2 * r2;
        let r6 = r4 * r2;
        let coords = q / r2;
        let mut jac = Matrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                jac[(i, j)] = if i == j { 1.0 / r2 } else { 0.0 } - 2.0 * q[i] * q[j] / r4;
            }
        }
        let mut second = vec![Matrix::zeros(2, 2); 2];
        for (i, s) in second.iter_mut().enumerate() {
            for j in 0..2 {
                for l in 0..2 {
                    let dij = if i == j { 1.0 } else { 0.0 };
                    let dil = if i == l { 1.0 } else { 0.0 };
                    let djl = if j == l { 1.0 } else { 0.0 };
                    s[(j, l)] = -2.0 * dij * q[l] / r4 - 2.0 * (dil * q[j] + djl * q[i]) / r4
                        + 8.0 * q[i] * q[j] * q[l] / r6;
                }
            }
        }
        Representation {
            coords,
            jacobian: Some(jac),
            second: Some(second),
        }
    }

    fn conformal_factor(q: &Vector) -> f64 {
        let d = 1.0 + q.norm_squared();
        4.0 / (d * d)
    }
}

impl Default for RoundSphere {
    fn default() -> Self {
        Self::new()
    }
}

impl ManifoldModel for RoundSphere {
    fn name(&self) -> String {
        "sphere2".into()
    }

    fn dim(&self) -> usize {
        2
    }

    fn charts(&self) -> &[Chart] {
        &self.charts
    }

    fn injectivity_radius(&self) -> f64 {
        std::f64::consts::PI
    }

    fn represent(&self, chart: usize, _anchor: &Vector, x: &ChartPoint) -> Representation {
        if chart == x.chart {
            Representation {
                coords: x.coords.clone(),
                jacobian: None,
                second: None,
            }
        } else {
            Self::inversion(&x.coords)
        }
    }

    fn rebase(&self, x: &ChartPoint) -> Result<ChartPoint> {
        if !self.in_domain(x.chart, &x.coords) {
            return Err(Error::OutsideCharts {
                coords: x.coords.iter().copied().collect(),
            });
        }
        if x.coords.norm() > SPHERE_SWITCH_RADIUS {
            Ok(ChartPoint {
                chart: 1 - x.chart,
                coords: Self::inversion(&x.coords).coords,
            })
        } else {
            Ok(x.clone())
        }
    }

    fn metric(&self, _chart: usize, q: &Vector) -> Matrix {
        Matrix::identity(2, 2) * Self::conformal_factor(q)
    }

    fn metric_derivatives(&self, _chart: usize, q: &Vector) -> Vec<Matrix> {
        let d = 1.0 + q.norm_squared();
        (0..2)
            .map(|k| Matrix::identity(2, 2) * (-16.0 * q[k] / d.powi(3)))
            .collect()
    }

    fn metric_second_derivatives(&self, _chart: usize, q: &Vector) -> Vec<Vec<Matrix>> {
        let d = 1.0 + q.norm_squared();
        (0..2)
            .map(|k| {
                (0..2)
                    .map(|l| {
                        let dkl = if k == l { 1.0 } else { 0.0 };
                        Matrix::identity(2, 2)
                            * (-16.0 * dkl / d.powi(3) + 96.0 * q[k] * q[l] / d.powi(4))
                    })
                    .collect()
            })
            .collect()
    }

    fn christoffel(&self, _chart: usize, q: &Vector) -> Christoffel {
        // Conformal metric e^{2f} I with f = ln 2 − ln(1+|q|²).
        let d = 1.0 + q.norm_squared();
        let df = [-2.0 * q[0] / d, -2.0 * q[1] / d];
        let gamma = (0..2)
            .map(|k| {
                let mut g = Matrix::zeros(2, 2);
                for i in 0..2 {
                    for j in 0..2 {
                        let mut v = 0.0;
                        if i == k {
                            v += df[j];
                        }
                        if j == k {
                            v += df[i];
                        }
                        if i == j {
                            v -= df[k];
                        }
                        g[(i, j)] = v;
                    }
                }
                g
            })
            .collect();
        Christoffel { gamma }
    }

    fn exp_map(&self, x: &ChartPoint, v: &Vector) -> Result<ChartPoint> {
        let p = self.embed(x);
        let big_v = self.embed_jacobian(x) * nalgebra::Vector2::new(v[0], v[1]);
        let s = big_v.norm();
        if s == 0.0 {
            return Ok(x.clone());
        }
        let (c, sn) = (s.cos(), s.sin());
        let out = [
            p[0] * c + big_v[0] / s * sn,
            p[1] * c + big_v[1] / s * sn,
            p[2] * c + big_v[2] / s * sn,
        ];
        Ok(self.from_embedding(out))
    }

    fn distance(&self, x: &ChartPoint, y: &ChartPoint) -> f64 {
        let a = nalgebra::Vector3::from(self.embed(x));
        let b = nalgebra::Vector3::from(self.embed(y));
        a.cross(&b).norm().atan2(a.dot(&b))
    }
}
