//! Discrete paths `γ: [0,1] → M`, the midpoint-rule action, its exact first
//! and second derivatives, boundary conditions and the `W^{1,2}` metric.
//!
//! Segment `i` is evaluated in the chart of node `i`: with `a = qᵢ`,
//! `b = T(qᵢ₊₁)` (node `i+1` re-expressed in that chart), it contributes
//! `L(t_{i+½}, (a+b)/2, N(b−a))/N`. Derivatives with respect to node `i+1`
//! are pulled back through `T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fiber_norm, ChartPoint, Manifold, Matrix, Vector};
use crate::models::LagrangianModel;

#[derive(Clone, Debug)]
pub struct DiscretePath {
    manifold: Manifold,
    pub nodes: Vec<ChartPoint>,
}

/// One segment expressed in the chart of its first node.
#[derive(Clone, Debug)]
pub struct Segment {
    pub chart: usize,
    pub a: Vector,
    pub b: Vector,
    /// `∂b/∂qᵢ₊₁`; `None` for the identity.
    pub jacobian: Option<Matrix>,
    pub second: Option<Vec<Matrix>>,
}

impl Segment {
    pub fn midpoint(&self) -> Vector {
        (&self.a + &self.b) * 0.5
    }

    pub fn velocity(&self, n: usize) -> Vector {
        (&self.b - &self.a) * n as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub manifold: String,
    pub segments: usize,
    pub charts: Vec<usize>,
    pub nodes: Vec<Vec<f64>>,
}

impl DiscretePath {
    pub fn new(manifold: Manifold, nodes: Vec<ChartPoint>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput(
                "a path needs at least two nodes".into(),
            ));
        }
        for x in &nodes {
            if !manifold.in_domain(x.chart, &x.coords) {
                return Err(Error::OutsideCharts {
                    coords: x.coords.iter().copied().collect(),
                });
            }
        }
        let path = Self { manifold, nodes };
        path.check_chords()?;
        Ok(path)
    }

    /// Samples `f` at `tᵢ = i/N` and rebases every node.
    pub fn from_fn(
        manifold: Manifold,
        segments: usize,
        f: impl Fn(f64) -> ChartPoint,
    ) -> Result<Self> {
        let nodes = (0..=segments)
            .map(|i| manifold.rebase(&f(i as f64 / segments as f64)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(manifold, nodes)
    }

    pub fn constant(manifold: Manifold, segments: usize, x: &ChartPoint) -> Result<Self> {
        let x = manifold.rebase(x)?;
        Self::new(manifold, vec![x; segments + 1])
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    pub fn segment(&self, i: usize) -> Segment {
        let x = &self.nodes[i];
        let rep = self
            .manifold
            .represent(x.chart, &x.coords, &self.nodes[i + 1]);
        Segment {
            chart: x.chart,
            a: x.coords.clone(),
            b: rep.coords,
            jacobian: rep.jacobian,
            second: rep.second,
        }
    }

    fn check_chords(&self) -> Result<()> {
        let limit = self.manifold.injectivity_radius();
        for i in 0..self.segments() {
            let d = self.manifold.distance(&self.nodes[i], &self.nodes[i + 1]);
            if !(d < limit) {
                return Err(Error::SegmentTooLong {
                    segment: i,
                    length: d,
                    limit,
                });
            }
        }
        Ok(())
    }

    /// Metric speed `|N(b−a)|` at each segment midpoint.
    pub fn speeds(&self) -> Vec<f64> {
        let n = self.segments();
        (0..n)
            .map(|i| {
                let s = self.segment(i);
                fiber_norm(
                    &self.manifold.metric(s.chart, &s.midpoint()),
                    &s.velocity(n),
                )
            })
            .collect()
    }

    pub fn max_speed(&self) -> f64 {
        self.speeds().into_iter().fold(0.0, f64::max)
    }

    /// `‖γ′‖_{L²}` by the midpoint rule.
    pub fn l2_speed(&self) -> f64 {
        let n = self.segments() as f64;
        (self.speeds().iter().map(|s| s * s).sum::<f64>() / n).sqrt()
    }

    /// Moves node `i` by `delta[i]` in its chart. Nodes with `rebase[i]`
    /// false keep their chart (constrained endpoints).
    pub fn displaced(&self, delta: &[Vector], rebase: impl Fn(usize) -> bool) -> Result<Self> {
        let nodes = self
            .nodes
            .iter()
            .zip(delta)
            .enumerate()
            .map(|(i, (x, d))| {
                let moved = ChartPoint {
                    chart: x.chart,
                    coords: &x.coords + d,
                };
                if rebase(i) {
                    self.manifold.rebase(&moved)
                } else {
                    Ok(moved)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.manifold.clone(), nodes)
    }

    /// Point at parameter `t`, interpolated linearly in the chart of the
    /// containing segment.
    pub fn at(&self, t: f64) -> ChartPoint {
        let n = self.segments();
        let x = (t.clamp(0.0, 1.0) * n as f64).min(n as f64);
        let i = (x.floor() as usize).min(n - 1);
        let f = x - i as f64;
        if f == 0.0 {
            return self.nodes[i].clone();
        }
        if f == 1.0 {
            return self.nodes[i + 1].clone();
        }
        let s = self.segment(i);
        ChartPoint {
            chart: s.chart,
            coords: &s.a * (1.0 - f) + &s.b * f,
        }
    }

    /// Resamples on `segments` uniform segments. Endpoints are kept verbatim.
    pub fn resample(&self, segments: usize) -> Result<Self> {
        let nodes = (0..=segments)
            .map(|i| {
                if i == 0 {
                    Ok(self.nodes[0].clone())
                } else if i == segments {
                    Ok(self.nodes[self.segments()].clone())
                } else {
                    self.manifold.rebase(&self.at(i as f64 / segments as f64))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.manifold.clone(), nodes)
    }

    /// Max over `t` of the distance to `other`, sampled on the finer grid.
    pub fn c0_distance(&self, other: &DiscretePath) -> f64 {
        let n = self.segments().max(other.segments());
        (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                self.manifold.distance(&self.at(t), &other.at(t))
            })
            .fold(0.0, f64::max)
    }

    pub fn to_record(&self) -> PathRecord {
        PathRecord {
            manifold: self.manifold.name(),
            segments: self.segments(),
            charts: self.nodes.iter().map(|x| x.chart).collect(),
            nodes: self
                .nodes
                .iter()
                .map(|x| x.coords.iter().copied().collect())
                .collect(),
        }
    }

    pub fn from_record(manifold: Manifold, rec: &PathRecord) -> Result<Self> {
        if rec.manifold != manifold.name()
            || rec.nodes.len() != rec.segments + 1
            || rec.charts.len() != rec.nodes.len()
        {
            return Err(Error::InvalidInput(
                "path record does not match its manifold".into(),
            ));
        }
        let nodes = rec
            .charts
            .iter()
            .zip(&rec.nodes)
            .map(|(c, x)| ChartPoint::new(*c, x))
            .collect();
        Self::new(manifold, nodes)
    }
}

/// Constraint on one endpoint, in the chart coordinates of that endpoint.
#[derive(Clone, Debug)]
pub enum EndConstraint {
    Point(ChartPoint),
    Free,
    /// `{q : A q = b}`.
    Affine {
        a: Matrix,
        b: Vector,
    },
}

/// The submanifold `Q ⊂ M × M` of admissible endpoint pairs.
#[derive(Clone, Debug)]
pub enum BoundaryCondition {
    Periodic,
    FixedEndpoints {
        q0: ChartPoint,
        q1: ChartPoint,
    },
    Neumann,
    Product {
        q0: EndConstraint,
        q1: EndConstraint,
    },
    /// `{(q₀, q₁) : A (q₀, q₁) = b}` with `A` of size `r × 2n`.
    General {
        a: Matrix,
        b: Vector,
    },
}

/// Orthonormal basis of `ker A`.
fn kernel_basis(a: &Matrix) -> Matrix {
    let cols = a.ncols();
    if a.nrows() == 0 {
        return Matrix::identity(cols, cols);
    }
    // eigenvectors of AᵀA with zero eigenvalue
    let ata = a.transpose() * a;
    let eig = ata.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let keep: Vec<usize> = (0..cols)
        .filter(|&i| eig.eigenvalues[i].abs() <= 1e-12 * scale)
        .collect();
    let mut basis = Matrix::zeros(cols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &eig.eigenvectors.column(i));
    }
    basis
}

impl BoundaryCondition {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryCondition::Periodic => "periodic",
            BoundaryCondition::FixedEndpoints { .. } => "endpoints",
            BoundaryCondition::Neumann => "neumann",
            BoundaryCondition::Product { .. } => "product",
            BoundaryCondition::General { .. } => "general",
        }
    }

    /// `E` (2n × k): admissible endpoint variations are `(δq₀, δq_N) = E w`.
    pub fn endpoint_basis(&self, n: usize) -> Matrix {
        match self {
            BoundaryCondition::Periodic => {
                let mut e = Matrix::zeros(2 * n, n);
                for i in 0..n {
                    e[(i, i)] = 1.0;
                    e[(n + i, i)] = 1.0;
                }
                e
            }
            BoundaryCondition::FixedEndpoints { .. } => Matrix::zeros(2 * n, 0),
            BoundaryCondition::Neumann => Matrix::identity(2 * n, 2 * n),
            BoundaryCondition::Product { q0, q1 } => {
                let factor = |c: &EndConstraint| match c {
                    EndConstraint::Point(_) => Matrix::zeros(n, 0),
                    EndConstraint::Free => Matrix::identity(n, n),
                    EndConstraint::Affine { a, .. } => kernel_basis(a),
                };
                let (e0, e1) = (factor(q0), factor(q1));
                let mut e = Matrix::zeros(2 * n, e0.ncols() + e1.ncols());
                e.view_mut((0, 0), (n, e0.ncols())).copy_from(&e0);
                e.view_mut((n, e0.ncols()), (n, e1.ncols())).copy_from(&e1);
                e
            }
            BoundaryCondition::General { a, .. } => kernel_basis(a),
        }
    }

    /// Orthogonal projector onto `T_{(q₀,q₁)}Q` in endpoint coordinates.
    pub fn tangent_projector(&self, n: usize) -> Matrix {
        let e = self.endpoint_basis(n);
        if e.ncols() == 0 {
            return Matrix::zeros(2 * n, 2 * n);
        }
        let gram = e.transpose() * &e;
        let inv = gram
            .try_inverse()
            .expect("endpoint basis has full column rank");
        &e * inv * e.transpose()
    }

    /// Whether node `i` of an `N`-segment path may change chart.
    pub fn rebases(&self, i: usize, segments: usize) -> bool {
        let endpoint = i == 0 || i == segments;
        !(endpoint
            && matches!(
                self,
                BoundaryCondition::Product { .. } | BoundaryCondition::General { .. }
            ))
    }

    /// Distance of `(γ(0), γ(1))` from `Q`.
    pub fn constraint_residual(&self, path: &DiscretePath) -> f64 {
        let m = path.manifold();
        let first = &path.nodes[0];
        let last = &path.nodes[path.segments()];
        let end = |x: &ChartPoint, c: &EndConstraint| match c {
            EndConstraint::Point(p) => m.distance(x, p),
            EndConstraint::Free => 0.0,
            EndConstraint::Affine { a, b } => (a * &x.coords - b).norm(),
        };
        match self {
            BoundaryCondition::Periodic => m.distance(first, last),
            BoundaryCondition::FixedEndpoints { q0, q1 } => {
                m.distance(first, q0) + m.distance(last, q1)
            }
            BoundaryCondition::Neumann => 0.0,
            BoundaryCondition::Product { q0, q1 } => end(first, q0) + end(last, q1),
            BoundaryCondition::General { a, b } => {
                let n = first.coords.len();
                let mut x = Vector::zeros(2 * n);
                x.rows_mut(0, n).copy_from(&first.coords);
                x.rows_mut(n, n).copy_from(&last.coords);
                (a * x - b).norm()
            }
        }
    }

    /// Forces the endpoint data implied by the condition onto `path`.
    pub fn apply(&self, path: &DiscretePath) -> Result<DiscretePath> {
        let mut nodes = path.nodes.clone();
        let n = nodes.len() - 1;
        match self {
            BoundaryCondition::Periodic => nodes[n] = nodes[0].clone(),
            BoundaryCondition::FixedEndpoints { q0, q1 } => {
                nodes[0] = path.manifold().rebase(q0)?;
                nodes[n] = path.manifold().rebase(q1)?;
            }
            BoundaryCondition::Product { q0, q1 } => {
                if let EndConstraint::Point(p) = q0 {
                    nodes[0] = p.clone();
                }
                if let EndConstraint::Point(p) = q1 {
                    nodes[n] = p.clone();
                }
            }
            _ => {}
        }
        DiscretePath::new(path.manifold().clone(), nodes)
    }
}

/// Coordinates `z` on the admissible variations of a path: the `k`
/// endpoint coefficients followed by the interior node displacements.
#[derive(Clone, Debug)]
pub struct VariationSpace {
    pub n: usize,
    pub segments: usize,
    pub basis: Matrix,
}

impl VariationSpace {
    pub fn new(bc: &BoundaryCondition, path: &DiscretePath) -> Self {
        Self {
            n: path.dim(),
            segments: path.segments(),
            basis: bc.endpoint_basis(path.dim()),
        }
    }

    pub fn endpoint_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.endpoint_dim() + (self.segments - 1) * self.n
    }

    /// `(offset, M)` with node displacement `δᵢ = M z[offset..offset+cols]`.
    fn node_map(&self, i: usize) -> (usize, Matrix) {
        let n = self.n;
        if i == 0 {
            (0, self.basis.rows(0, n).into_owned())
        } else if i == self.segments {
            (0, self.basis.rows(n, n).into_owned())
        } else {
            (self.endpoint_dim() + (i - 1) * n, Matrix::identity(n, n))
        }
    }

    /// Per-node displacements.
    pub fn expand(&self, z: &Vector) -> Vec<Vector> {
        (0..=self.segments)
            .map(|i| {
                let (off, m) = self.node_map(i);
                &m * z.rows(off, m.ncols())
            })
            .collect()
    }

    /// Transpose of [`VariationSpace::expand`] applied to per-node covectors.
    pub fn reduce(&self, nodes: &[Vector]) -> Vector {
        let mut z = Vector::zeros(self.dim());
        for (i, g) in nodes.iter().enumerate() {
            let (off, m) = self.node_map(i);
            let mut block = z.rows_mut(off, m.ncols());
            block += m.transpose() * g;
        }
        z
    }

    /// `Bᵀ H B` for a node-block matrix given as `blocks[(i, j)]`.
    fn reduce_blocks(&self, blocks: &[(usize, usize, Matrix)]) -> Matrix {
        let d = self.dim();
        let mut out = Matrix::zeros(d, d);
        let maps: Vec<(usize, Matrix)> = (0..=self.segments).map(|i| self.node_map(i)).collect();
        for (i, j, h) in blocks {
            let (oi, mi) = &maps[*i];
            let (oj, mj) = &maps[*j];
            if mi.ncols() == 0 || mj.ncols() == 0 {
                continue;
            }
            let mut view = out.view_mut((*oi, *oj), (mi.ncols(), mj.ncols()));
            view += mi.transpose() * h * mj;
        }
        out
    }
}

fn check_segment(path: &DiscretePath, i: usize, s: &Segment) -> Result<()> {
    let m = path.manifold();
    let g = m.metric(s.chart, &s.midpoint());
    let chord = fiber_norm(&g, &(&s.b - &s.a));
    let limit = m.injectivity_radius();
    if !(chord < limit) {
        return Err(Error::SegmentTooLong {
            segment: i,
            length: chord,
            limit,
        });
    }
    Ok(())
}

/// `𝔸(γ) = Σᵢ L(t_{i+½}, mᵢ, vᵢ)/N`, summed in index order.
pub fn action(l: &dyn LagrangianModel, path: &DiscretePath) -> Result<f64> {
    let n = path.segments();
    let mut total = 0.0;
    for i in 0..n {
        let s = path.segment(i);
        check_segment(path, i, &s)?;
        let t = (i as f64 + 0.5) / n as f64;
        total += l.value(t, s.chart, &s.midpoint(), &s.velocity(n)) / n as f64;
    }
    Ok(total)
}

/// Action and per-node derivatives `∂𝔸/∂qᵢ` in each node's own chart.
pub fn node_gradient(l: &dyn LagrangianModel, path: &DiscretePath) -> Result<(f64, Vec<Vector>)> {
    let n = path.segments();
    let dim = path.dim();
    let nf = n as f64;
    let mut grads = vec![Vector::zeros(dim); n + 1];
    let mut total = 0.0;
    for i in 0..n {
        let s = path.segment(i);
        check_segment(path, i, &s)?;
        let t = (i as f64 + 0.5) / nf;
        let f = l.first(t, s.chart, &s.midpoint(), &s.velocity(n));
        total += f.value / nf;
        let half = &f.d_q * (0.5 / nf);
        grads[i] += &half - &f.d_v;
        let gb = half + &f.d_v;
        grads[i + 1] += match &s.jacobian {
            Some(j) => j.transpose() * gb,
            None => gb,
        };
    }
    Ok((total, grads))
}

#[derive(Clone, Debug)]
pub struct Gradient {
    pub action: f64,
    /// Derivative of the action in the variation coordinates.
    pub dual: Vector,
    /// `W^{1,2}` Riesz representative `G⁻¹ dual`.
    pub riesz: Vector,
    /// `√(dualᵀ G⁻¹ dual)`.
    pub norm: f64,
}

pub fn gradient(
    l: &dyn LagrangianModel,
    path: &DiscretePath,
    bc: &BoundaryCondition,
) -> Result<Gradient> {
    let space = VariationSpace::new(bc, path);
    let (action, nodes) = node_gradient(l, path)?;
    let dual = space.reduce(&nodes);
    let gram = w12_gram(path, bc);
    let riesz = match gram.cholesky() {
        Some(ch) => ch.solve(&dual),
        None => dual.clone(),
    };
    let norm = dual.dot(&riesz).max(0.0).sqrt();
    Ok(Gradient {
        action,
        dual,
        riesz,
        norm,
    })
}

/// Exact second derivative of the discrete action in the variation
/// coordinates of `bc`.
pub fn hessian(
    l: &dyn LagrangianModel,
    path: &DiscretePath,
    bc: &BoundaryCondition,
) -> Result<Matrix> {
    let space = VariationSpace::new(bc, path);
    let blocks = node_hessian_blocks(l, path)?;
    let h = space.reduce_blocks(&blocks);
    Ok((&h + h.transpose()) * 0.5)
}

/// Node-level Hessian blocks `(i, j, ∂²𝔸/∂qᵢ∂qⱼ)`.
pub fn node_hessian_blocks(
    l: &dyn LagrangianModel,
    path: &DiscretePath,
) -> Result<Vec<(usize, usize, Matrix)>> {
    let n = path.segments();
    let dim = path.dim();
    let nf = n as f64;
    let id = Matrix::identity(dim, dim);
    // δ(m, v) = Pa δa + Pb δb
    let mut pa = Matrix::zeros(2 * dim, dim);
    let mut pb = Matrix::zeros(2 * dim, dim);
    pa.view_mut((0, 0), (dim, dim)).copy_from(&(&id * 0.5));
    pa.view_mut((dim, 0), (dim, dim)).copy_from(&(&id * -nf));
    pb.view_mut((0, 0), (dim, dim)).copy_from(&(&id * 0.5));
    pb.view_mut((dim, 0), (dim, dim)).copy_from(&(&id * nf));
    let mut blocks = Vec::with_capacity(4 * n);
    for i in 0..n {
        let s = path.segment(i);
        check_segment(path, i, &s)?;
        let t = (i as f64 + 0.5) / nf;
        let jet = l.jet(t, s.chart, &s.midpoint(), &s.velocity(n));
        let hess = jet.hessian() / nf;
        let haa = pa.transpose() * &hess * &pa;
        let mut hab = pa.transpose() * &hess * &pb;
        let mut hbb = pb.transpose() * &hess * &pb;
        if let Some(j) = &s.jacobian {
            let gb = &jet.d_q * (0.5 / nf) + &jet.d_v;
            hab *= j;
            hbb = j.transpose() * hbb * j;
            if let Some(sec) = &s.second {
                for (k, d2) in sec.iter().enumerate() {
                    hbb += d2 * gb[k];
                }
            }
        }
        blocks.push((i, i, haa));
        blocks.push((i + 1, i, hab.transpose()));
        blocks.push((i, i + 1, hab));
        blocks.push((i + 1, i + 1, hbb));
    }
    Ok(blocks)
}

/// Node-level `W^{1,2}` Gram blocks: per segment
/// `(∇ₜξ·∇ₜη + ξ·η)/N` at the midpoint with `∇ₜξ = N(ξ_b − ξ_a) + Γ(v, ξ_m)`.
fn gram_blocks(path: &DiscretePath) -> Vec<(usize, usize, Matrix)> {
    let m = path.manifold();
    let n = path.segments();
    let dim = path.dim();
    let nf = n as f64;
    let id = Matrix::identity(dim, dim);
    let mut blocks = Vec::with_capacity(4 * n);
    for i in 0..n {
        let s = path.segment(i);
        let mid = s.midpoint();
        let v = s.velocity(n);
        let g = m.metric(s.chart, &mid);
        let gamma = m.christoffel(s.chart, &mid);
        // (Γv)[k][j] = Γᵏᵢⱼ vⁱ
        let mut gv = Matrix::zeros(dim, dim);
        for k in 0..dim {
            let row = v.transpose() * &gamma.gamma[k];
            gv.set_row(k, &row);
        }
        let da = &id * -nf + &gv * 0.5;
        let db = &id * nf + &gv * 0.5;
        let half = &id * 0.5;
        let block = |x: &Matrix, y: &Matrix| (x.transpose() * &g * y + &half * &g * &half) / nf;
        let haa = block(&da, &da);
        let mut hab = block(&da, &db);
        let mut hbb = block(&db, &db);
        if let Some(j) = &s.jacobian {
            hab *= j;
            hbb = j.transpose() * hbb * j;
        }
        blocks.push((i, i, haa));
        blocks.push((i + 1, i, hab.transpose()));
        blocks.push((i, i + 1, hab));
        blocks.push((i + 1, i + 1, hbb));
    }
    blocks
}

/// Gram matrix of the `W^{1,2}` inner product on the variation coordinates.
pub fn w12_gram(path: &DiscretePath, bc: &BoundaryCondition) -> Matrix {
    let space = VariationSpace::new(bc, path);
    let g = space.reduce_blocks(&gram_blocks(path));
    (&g + g.transpose()) * 0.5
}

/// `⟨ξ, η⟩_{W^{1,2}}` for per-node vectors.
pub fn w12_inner(path: &DiscretePath, xi: &[Vector], eta: &[Vector]) -> f64 {
    gram_blocks(path)
        .iter()
        .map(|(i, j, b)| xi[*i].dot(&(b * &eta[*j])))
        .sum()
}

/// Boundary momenta `(p₀, p_N)` of the discrete action: `p₀ = −∂𝔸₀/∂q₀`
/// from the first segment and `p_N = ∂𝔸_{N−1}/∂q_N` from the last one, each
/// in its node's chart. They approximate `∂ᵥL` at the ends to second order.
pub fn boundary_momenta(l: &dyn LagrangianModel, path: &DiscretePath) -> (Vector, Vector) {
    let n = path.segments();
    let nf = n as f64;
    let first = path.segment(0);
    let f = l.first(0.5 / nf, first.chart, &first.midpoint(), &first.velocity(n));
    let p0 = &f.d_v - &f.d_q * (0.5 / nf);
    let last = path.segment(n - 1);
    let f = l.first(
        1.0 - 0.5 / nf,
        last.chart,
        &last.midpoint(),
        &last.velocity(n),
    );
    let pb = &f.d_q * (0.5 / nf) + &f.d_v;
    let pn = match &last.jacobian {
        Some(j) => j.transpose() * pb,
        None => pb,
    };
    (p0, pn)
}

/// `max |∂ᵥL(1)[ξ₁] − ∂ᵥL(0)[ξ₀]|` over an orthonormal basis of `T_{(q₀,q₁)}Q`.
pub fn conormal_residual(
    bc: &BoundaryCondition,
    l: &dyn LagrangianModel,
    path: &DiscretePath,
) -> f64 {
    let n = path.dim();
    let e = bc.endpoint_basis(n);
    if e.ncols() == 0 {
        return 0.0;
    }
    let q = orthonormal_columns(&e);
    let (p0, pn) = boundary_momenta(l, path);
    (0..q.ncols())
        .map(|c| {
            let col = q.column(c);
            let xi0 = col.rows(0, n);
            let xi1 = col.rows(n, n);
            (pn.dot(&xi1) - p0.dot(&xi0)).abs()
        })
        .fold(0.0, f64::max)
}

fn orthonormal_columns(e: &Matrix) -> Matrix {
    let qr = e.clone().qr();
    qr.q().columns(0, e.ncols()).into_owned()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolderReport {
    pub holds: bool,
    /// Max over node pairs of `dist / (|t−s|^{1/2} ‖γ′‖_{L²})`.
    pub worst_ratio: f64,
}

/// Checks `dist(γ(t), γ(s)) ≤ |t−s|^{1/2} ‖γ′‖_{L²}` on all node pairs.
pub fn holder_bound_check(path: &DiscretePath) -> HolderReport {
    let n = path.segments();
    let energy = path.l2_speed();
    let m = path.manifold();
    let mut worst: f64 = 0.0;
    for i in 0..=n {
        for j in i + 1..=n {
            let d = m.distance(&path.nodes[i], &path.nodes[j]);
            let bound = (((j - i) as f64) / n as f64).sqrt() * energy;
            if bound > 0.0 {
                worst = worst.max(d / bound);
            } else if d > 0.0 {
                worst = f64::INFINITY;
            }
        }
    }
    HolderReport {
        holds: worst <= 1.0 + 1e-6,
        worst_ratio: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_sphere2, build_torus, RoundSphere};
    use crate::models::{PolynomialLagrangian, Potential};
    use std::f64::consts::PI;

    fn free(m: Manifold) -> PolynomialLagrangian {
        PolynomialLagrangian::mechanical(m, Potential::Zero)
    }

    #[test]
    fn straight_line_action_is_half() {
        let m = build_torus(2).unwrap();
        for n in [3, 16, 128] {
            let p = DiscretePath::from_fn(m.clone(), n, |t| ChartPoint::new(0, &[t, 0.0])).unwrap();
            let a = action(&free(m.clone()), &p).unwrap();
            assert!((a - 0.5).abs() < 1e-14, "{a}");
        }
    }

    #[test]
    fn constant_path_actions() {
        let m = build_torus(2).unwrap();
        let x = ChartPoint::new(0, &[0.0, 0.3]);
        let p = DiscretePath::constant(m.clone(), 8, &x).unwrap();
        assert_eq!(action(&free(m.clone()), &p).unwrap(), 0.0);
        let l = PolynomialLagrangian::mechanical(m.clone(), Potential::Cos2 { epsilon: 1.0 });
        let origin =
            DiscretePath::constant(m.clone(), 8, &ChartPoint::new(0, &[0.0, 0.5])).unwrap();
        // cos(0) + cos(π) = 0
        assert!(action(&l, &origin).unwrap().abs() < 1e-15);
    }

    #[test]
    fn periodic_free_loop_is_critical() {
        let m = build_torus(2).unwrap();
        let p = DiscretePath::from_fn(m.clone(), 32, |t| ChartPoint::new(0, &[t, 0.25])).unwrap();
        let p = BoundaryCondition::Periodic.apply(&p).unwrap();
        let g = gradient(&free(m.clone()), &p, &BoundaryCondition::Periodic).unwrap();
        assert!(g.dual.amax() < 1e-12);
        assert!(conormal_residual(&BoundaryCondition::Periodic, &free(m), &p) < 1e-12);
    }

    #[test]
    fn neumann_constant_path_forces() {
        let m = build_torus(2).unwrap();
        let pot = Potential::Cos2 { epsilon: 0.1 };
        let l = PolynomialLagrangian::mechanical(m.clone(), pot.clone());
        let x = ChartPoint::new(0, &[0.2, 0.1]);
        let n = 16;
        let p = DiscretePath::constant(m.clone(), n, &x).unwrap();
        let (_, grad_u, _) = pot.eval(0.0, 0, &x.coords);
        let (_, nodes) = node_gradient(&l, &p).unwrap();
        let nf = n as f64;
        assert!((&nodes[0] + &grad_u * (0.5 / nf)).amax() < 1e-12);
        assert!((&nodes[5] + &grad_u / nf).amax() < 1e-12);
        let g = gradient(&l, &p, &BoundaryCondition::Neumann).unwrap();
        assert_eq!(g.dual.len(), (n + 1) * 2);
        let expected = grad_u.amax() * 0.5 / nf;
        assert!((conormal_residual(&BoundaryCondition::Neumann, &l, &p) - expected).abs() < 1e-12);
    }

    #[test]
    fn fixed_endpoint_hessian_dimension_and_residual() {
        let m = build_sphere2();
        let q0 = ChartPoint::new(0, &[0.0, 0.0]);
        let q1 = ChartPoint::new(0, &[0.5, 0.0]);
        let bc = BoundaryCondition::FixedEndpoints {
            q0: q0.clone(),
            q1: q1.clone(),
        };
        let p = DiscretePath::from_fn(m.clone(), 10, |t| {
            ChartPoint::new(0, &[0.5 * t, 0.1 * (PI * t).sin()])
        })
        .unwrap();
        let h = hessian(&free(m.clone()), &p, &bc).unwrap();
        assert_eq!(h.nrows(), 9 * 2);
        assert_eq!(conormal_residual(&bc, &free(m), &p), 0.0);
    }

    #[test]
    fn free_particle_spectrum_on_circle() {
        // mass-normalized second differences: eigenvalues 4N²sin²(πk/N)
        let m = build_torus(1).unwrap();
        let n = 64;
        let p = DiscretePath::constant(m.clone(), n, &ChartPoint::new(0, &[0.3])).unwrap();
        let h = hessian(&free(m), &p, &BoundaryCondition::Periodic).unwrap();
        let mut eig: Vec<f64> = (h * n as f64)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        eig.sort_by(f64::total_cmp);
        assert!(eig[0].abs() < 1e-9);
        for k in 1..4 {
            let exact = 4.0 * (n * n) as f64 * (PI * k as f64 / n as f64).sin().powi(2);
            assert!((eig[2 * k - 1] - exact).abs() < 1e-8 * exact);
            assert!((eig[2 * k] - exact).abs() < 1e-8 * exact);
            assert!((exact - (2.0 * PI * k as f64).powi(2)).abs() / exact < 0.01);
        }
    }

    #[test]
    fn w12_norm_of_constant_field_is_one() {
        let m = build_torus(2).unwrap();
        let p = DiscretePath::from_fn(m, 20, |t| ChartPoint::new(0, &[0.3 * t, 0.1])).unwrap();
        let xi = vec![Vector::from_vec(vec![0.6, 0.8]); 21];
        assert!((w12_inner(&p, &xi, &xi) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn w12_spike_matches_hand_quadrature() {
        let m = build_torus(1).unwrap();
        let n = 10;
        let p = DiscretePath::constant(m, n, &ChartPoint::new(0, &[0.0])).unwrap();
        let mut xi = vec![Vector::zeros(1); n + 1];
        xi[4] = Vector::from_element(1, 1.0);
        // two segments, each (N² + 1/4)/N
        let hand = 2.0 * ((n * n) as f64 + 0.25) / n as f64;
        assert!((w12_inner(&p, &xi, &xi) - hand).abs() < 1e-12);
    }

    #[test]
    fn projectors_are_idempotent_and_symmetric() {
        let a = Matrix::from_row_slice(1, 4, &[1.0, 0.0, -1.0, 0.0]);
        let cases = vec![
            BoundaryCondition::Periodic,
            BoundaryCondition::Neumann,
            BoundaryCondition::FixedEndpoints {
                q0: ChartPoint::new(0, &[0.0, 0.0]),
                q1: ChartPoint::new(0, &[0.0, 0.0]),
            },
            BoundaryCondition::Product {
                q0: EndConstraint::Point(ChartPoint::new(0, &[0.0, 0.0])),
                q1: EndConstraint::Free,
            },
            BoundaryCondition::General {
                a,
                b: Vector::zeros(1),
            },
        ];
        for bc in cases {
            let p = bc.tangent_projector(2);
            assert!((&p * &p - &p).amax() < 1e-10);
            assert!((&p - p.transpose()).amax() < 1e-10);
        }
        let p = BoundaryCondition::Periodic.tangent_projector(2);
        let diag = Vector::from_vec(vec![0.3, -0.2, 0.3, -0.2]);
        assert!((&p * &diag - &diag).amax() < 1e-12);
    }

    #[test]
    fn sphere_path_across_charts_keeps_action_and_gradient() {
        // the same geometric path with nodes in different charts
        let m = build_sphere2();
        let sphere = RoundSphere::new();
        let l = PolynomialLagrangian::mechanical(m.clone(), Potential::Height { epsilon: 0.3 });
        let curve = |t: f64| {
            let th = 0.3 + 2.2 * t;
            [
                th.sin() * (0.4 * t).cos(),
                th.sin() * (0.4 * t).sin(),
                th.cos(),
            ]
        };
        let a = DiscretePath::from_fn(m.clone(), 24, |t| sphere.from_embedding(curve(t))).unwrap();
        let charts: Vec<usize> = a.nodes.iter().map(|x| x.chart).collect();
        assert!(charts.contains(&0) && charts.contains(&1));
        let (act, grads) = node_gradient(&l, &a).unwrap();
        let direct = action(&l, &a).unwrap();
        assert!((act - direct).abs() < 1e-14);
        // gradient against differences in every node coordinate
        for i in [0, 7, 12, 24] {
            for k in 0..2 {
                let h = 1e-6;
                let mut plus = vec![Vector::zeros(2); 25];
                plus[i][k] = h;
                let minus: Vec<Vector> = plus.iter().map(|v| -v).collect();
                let ap = action(&l, &a.displaced(&plus, |_| false).unwrap()).unwrap();
                let am = action(&l, &a.displaced(&minus, |_| false).unwrap()).unwrap();
                let fd = (ap - am) / (2.0 * h);
                assert!(
                    (fd - grads[i][k]).abs() < 1e-7,
                    "node {i} comp {k}: {fd} vs {}",
                    grads[i][k]
                );
            }
        }
    }

    #[test]
    fn holder_bound_holds_with_equality_on_lines() {
        let m = build_torus(2).unwrap();
        let p =
            DiscretePath::from_fn(m.clone(), 16, |t| ChartPoint::new(0, &[0.4 * t, 0.0])).unwrap();
        let r = holder_bound_check(&p);
        assert!(r.holds && (r.worst_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn record_round_trip() {
        let m = build_sphere2();
        let p = DiscretePath::from_fn(m.clone(), 5, |t| ChartPoint::new(0, &[t, 0.5])).unwrap();
        let rec = p.to_record();
        let back = DiscretePath::from_record(
            m,
            &serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap(),
        )
        .unwrap();
        assert_eq!(back.to_record(), rec);
    }

    #[test]
    fn overlong_segment_is_rejected() {
        let m = build_torus(1).unwrap();
        let nodes = vec![ChartPoint::new(0, &[0.0]), ChartPoint::new(0, &[0.5])];
        assert!(matches!(
            DiscretePath::new(m, nodes),
            Err(Error::SegmentTooLong { .. })
        ));
    }
}
