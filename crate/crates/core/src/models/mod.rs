//! Lagrangian and Hamiltonian function objects, their derivatives, sampled
//! Tonelli-condition checks and the Legendre/Fenchel transform.
//!
//! All functions are expressed in chart coordinates `(t, chart, q, v)`; the
//! manifold supplies the metric used for norms.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{Manifold, Matrix, Vector};

pub mod checks;
pub mod expr;
pub mod hamiltonian;
pub mod legendre;
pub mod registry;
pub mod sampling;

pub use checks::{
    check_completeness_criterion, check_h1_h2, check_tonelli, TonelliReport, Verdict,
};
pub use hamiltonian::{
    action_integrand, FenchelDual, Hamiltonian, HamiltonianModel, MechanicalHamiltonian,
};
pub use legendre::legendre;
pub use registry::{
    build_hamiltonian, build_lagrangian, LagrangianKind, ModelConfig, PotentialKind,
};
pub use sampling::SampleSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

/// Value and first derivatives of a fiber function at a point.
#[derive(Clone, Debug)]
pub struct FirstJet {
    pub value: f64,
    pub d_q: Vector,
    pub d_v: Vector,
}

/// Value, first and second derivatives. `d_qv[(i, j)] = ∂²/∂qᵢ∂vⱼ`.
#[derive(Clone, Debug)]
pub struct Jet {
    pub value: f64,
    pub d_q: Vector,
    pub d_v: Vector,
    pub d_qq: Matrix,
    pub d_qv: Matrix,
    pub d_vv: Matrix,
}

impl Jet {
    pub fn zeros(n: usize) -> Self {
        Self {
            value: 0.0,
            d_q: Vector::zeros(n),
            d_v: Vector::zeros(n),
            d_qq: Matrix::zeros(n, n),
            d_qv: Matrix::zeros(n, n),
            d_vv: Matrix::zeros(n, n),
        }
    }

    pub fn first(&self) -> FirstJet {
        FirstJet {
            value: self.value,
            d_q: self.d_q.clone(),
            d_v: self.d_v.clone(),
        }
    }

    /// Jet of `f ∘ self` given `f(value), f′(value), f″(value)`.
    pub fn compose(&self, f: f64, f1: f64, f2: f64) -> Self {
        Self {
            value: f,
            d_q: &self.d_q * f1,
            d_v: &self.d_v * f1,
            d_qq: &self.d_qq * f1 + &self.d_q * self.d_q.transpose() * f2,
            d_qv: &self.d_qv * f1 + &self.d_q * self.d_v.transpose() * f2,
            d_vv: &self.d_vv * f1 + &self.d_v * self.d_v.transpose() * f2,
        }
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.value *= s;
        self.d_q *= s;
        self.d_v *= s;
        self.d_qq *= s;
        self.d_qv *= s;
        self.d_vv *= s;
        self
    }

    pub fn plus(mut self, other: &Jet) -> Self {
        self.value += other.value;
        self.d_q += &other.d_q;
        self.d_v += &other.d_v;
        self.d_qq += &other.d_qq;
        self.d_qv += &other.d_qv;
        self.d_vv += &other.d_vv;
        self
    }

    /// Full `2n × 2n` Hessian in `(q, v)` order.
    pub fn hessian(&self) -> Matrix {
        let n = self.d_q.len();
        let mut h = Matrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&self.d_qq);
        h.view_mut((0, n), (n, n)).copy_from(&self.d_qv);
        h.view_mut((n, 0), (n, n)).copy_from(&self.d_qv.transpose());
        h.view_mut((n, n), (n, n)).copy_from(&self.d_vv);
        h
    }
}

/// Time-dependent Lagrangian on the tangent bundle, in chart coordinates.
pub trait LagrangianModel: Send + Sync + Debug {
    fn manifold(&self) -> &Manifold;

    fn value(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> f64;

    fn first(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> FirstJet {
        fd_first(|q, v| self.value(t, chart, q, v), q, v)
    }

    fn jet(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> Jet {
        fd_jet(
            |q, v| self.first(t, chart, q, v),
            self.value(t, chart, q, v),
            q,
            v,
        )
    }

    fn d_t(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> f64 {
        if self.autonomous() {
            return 0.0;
        }
        let h = 1e-6;
        (self.value(t + h, chart, q, v) - self.value(t - h, chart, q, v)) / (2.0 * h)
    }

    /// `∂ₜ∂ᵥL`.
    fn d_tv(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> Vector {
        if self.autonomous() {
            return Vector::zeros(q.len());
        }
        let h = 1e-6;
        (self.first(t + h, chart, q, v).d_v - self.first(t - h, chart, q, v).d_v) / (2.0 * h)
    }

    fn autonomous(&self) -> bool;

    fn time_periodic(&self) -> bool {
        true
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    fn describe(&self) -> String;
}

pub type Lagrangian = Arc<dyn LagrangianModel>;

/// Central differences with step `1e−6·(1+|v|)`.
pub fn fd_first(f: impl Fn(&Vector, &Vector) -> f64, q: &Vector, v: &Vector) -> FirstJet {
    let n = q.len();
    let h = 1e-6 * (1.0 + v.norm());
    let mut d_q = Vector::zeros(n);
    let mut d_v = Vector::zeros(n);
    for i in 0..n {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        d_q[i] = (f(&qp, v) - f(&qm, v)) / (2.0 * h);
        let mut vp = v.clone();
        let mut vm = v.clone();
        vp[i] += h;
        vm[i] -= h;
        d_v[i] = (f(q, &vp) - f(q, &vm)) / (2.0 * h);
    }
    FirstJet {
        value: f(q, v),
        d_q,
        d_v,
    }
}

/// Second derivatives by central differences of first derivatives, step
/// `1e−4·(1+|v|)`, symmetrized.
pub fn fd_jet(
    first: impl Fn(&Vector, &Vector) -> FirstJet,
    value: f64,
    q: &Vector,
    v: &Vector,
) -> Jet {
    let n = q.len();
    let h = 1e-4 * (1.0 + v.norm());
    let base = first(q, v);
    let mut jet = Jet {
        value,
        d_q: base.d_q,
        d_v: base.d_v,
        d_qq: Matrix::zeros(n, n),
        d_qv: Matrix::zeros(n, n),
        d_vv: Matrix::zeros(n, n),
    };
    let mut dq_cols = Vec::with_capacity(n);
    for i in 0..n {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        let a = first(&qp, v);
        let b = first(&qm, v);
        dq_cols.push(((&a.d_q - &b.d_q) / (2.0 * h), (&a.d_v - &b.d_v) / (2.0 * h)));
        let mut vp = v.clone();
        let mut vm = v.clone();
        vp[i] += h;
        vm[i] -= h;
        let a = first(q, &vp);
        let b = first(q, &vm);
        let dvv = (&a.d_v - &b.d_v) / (2.0 * h);
        let dvq = (&a.d_q - &b.d_q) / (2.0 * h);
        for k in 0..n {
            jet.d_vv[(k, i)] = dvv[k];
            // ∂/∂vᵢ of ∂L/∂q_k
            jet.d_qv[(k, i)] += 0.5 * dvq[k];
        }
    }
    for (i, (dqq, dqv)) in dq_cols.iter().enumerate() {
        for k in 0..n {
            jet.d_qq[(k, i)] = dqq[k];
            // ∂/∂qᵢ of ∂L/∂v_k
            jet.d_qv[(i, k)] += 0.5 * dqv[k];
        }
    }
    jet.d_qq = (&jet.d_qq + jet.d_qq.transpose()) * 0.5;
    jet.d_vv = (&jet.d_vv + jet.d_vv.transpose()) * 0.5;
    jet
}

/// Jet of the kinetic form `K(q, v) = vᵀ g(q) v`.
pub fn kinetic_jet(manifold: &Manifold, chart: usize, q: &Vector, v: &Vector) -> Jet {
    let n = q.len();
    let g = manifold.metric(chart, q);
    let dg = manifold.metric_derivatives(chart, q);
    let gv = &g * v;
    let mut jet = Jet::zeros(n);
    jet.value = v.dot(&gv);
    jet.d_v = &gv * 2.0;
    jet.d_vv = &g * 2.0;
    let dgv: Vec<Vector> = dg.iter().map(|d| d * v).collect();
    for k in 0..n {
        jet.d_q[k] = v.dot(&dgv[k]);
        for j in 0..n {
            jet.d_qv[(k, j)] = 2.0 * dgv[k][j];
        }
    }
    if dg.iter().any(|d| d.amax() != 0.0) {
        let d2g = manifold.metric_second_derivatives(chart, q);
        for k in 0..n {
            for l in 0..n {
                jet.d_qq[(k, l)] = v.dot(&(&d2g[k][l] * v));
            }
        }
    }
    jet
}

/// Potential energy `U(t, q)` for mechanical systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "potential", rename_all = "kebab-case")]
pub enum Potential {
    /// `U ≡ 0`.
    Zero,
    /// `U = ε Σᵢ cos(2π qᵢ)` (torus coordinates).
    Cos2 { epsilon: f64 },
    /// `U = ε sin(2πt) Σᵢ cos(2π qᵢ)`.
    TimeCos2 { epsilon: f64 },
    /// `U = ε z`, the height on the round sphere.
    Height { epsilon: f64 },
}

impl Potential {
    pub fn autonomous(&self) -> bool {
        !matches!(self, Potential::TimeCos2 { .. })
    }

    /// Value, gradient and Hessian in chart coordinates.
    pub fn eval(&self, t: f64, chart: usize, q: &Vector) -> (f64, Vector, Matrix) {
        use std::f64::consts::PI;
        let n = q.len();
        let tau = 2.0 * PI;
        match *self {
            Potential::Zero => (0.0, Vector::zeros(n), Matrix::zeros(n, n)),
            Potential::Cos2 { epsilon } | Potential::TimeCos2 { epsilon } => {
                let s = match self {
                    Potential::TimeCos2 { .. } => (tau * t).sin(),
                    _ => 1.0,
                };
                let a = epsilon * s;
                let value = a * q.iter().map(|x| (tau * x).cos()).sum::<f64>();
                let grad = q.map(|x| -a * tau * (tau * x).sin());
                let hess = Matrix::from_diagonal(&q.map(|x| -a * tau * tau * (tau * x).cos()));
                (value, grad, hess)
            }
            Potential::Height { epsilon } => {
                let sign = if chart == 0 { 1.0 } else { -1.0 };
                let r2 = q.norm_squared();
                let d = 1.0 + r2;
                let value = epsilon * sign * (2.0 / d - 1.0);
                let grad = q * (epsilon * sign * -4.0 / (d * d));
                let mut hess = Matrix::zeros(n, n);
                for k in 0..n {
                    for l in 0..n {
                        let dkl = if k == l { 1.0 } else { 0.0 };
                        hess[(k, l)] = epsilon
                            * sign
                            * (-4.0 * dkl / (d * d) + 16.0 * q[k] * q[l] / (d * d * d));
                    }
                }
                (value, grad, hess)
            }
        }
    }

    pub fn d_t(&self, t: f64, q: &Vector) -> f64 {
        use std::f64::consts::PI;
        match *self {
            Potential::TimeCos2 { epsilon } => {
                let tau = 2.0 * PI;
                epsilon * tau * (tau * t).cos() * q.iter().map(|x| (tau * x).cos()).sum::<f64>()
            }
            _ => 0.0,
        }
    }
}

/// `L = a |v|⁴/4 + b |v|²/2 − U(t, q)`. The mechanical Lagrangian is
/// `a = 0, b = 1`.
#[derive(Clone, Debug)]
pub struct PolynomialLagrangian {
    manifold: Manifold,
    pub quartic: f64,
    pub quadratic: f64,
    pub potential: Potential,
}

impl PolynomialLagrangian {
    pub fn mechanical(manifold: Manifold, potential: Potential) -> Self {
        Self {
            manifold,
            quartic: 0.0,
            quadratic: 1.0,
            potential,
        }
    }

    pub fn quartic(manifold: Manifold, quartic: f64, quadratic: f64, potential: Potential) -> Self {
        Self {
            manifold,
            quartic,
            quadratic,
            potential,
        }
    }

    fn kinetic_profile(&self, k: f64) -> (f64, f64, f64) {
        (
            self.quartic * k * k / 4.0 + self.quadratic * k / 2.0,
            self.quartic * k / 2.0 + self.quadratic / 2.0,
            self.quartic / 2.0,
        )
    }
}

impl LagrangianModel for PolynomialLagrangian {
    fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    fn value(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> f64 {
        let g = self.manifold.metric(chart, q);
        let k = v.dot(&(g * v));
        self.kinetic_profile(k).0 - self.potential.eval(t, chart, q).0
    }

    fn first(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> FirstJet {
        let g = self.manifold.metric(chart, q);
        let gv = &g * v;
        let k = v.dot(&gv);
        let (f, f1, _) = self.kinetic_profile(k);
        let (u, du, _) = self.potential.eval(t, chart, q);
        let dg = self.manifold.metric_derivatives(chart, q);
        let d_q = Vector::from_iterator(q.len(), dg.iter().map(|d| f1 * v.dot(&(d * v)))) - du;
        FirstJet {
            value: f - u,
            d_q,
            d_v: gv * (2.0 * f1),
        }
    }

    fn jet(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> Jet {
        let kin = kinetic_jet(&self.manifold, chart, q, v);
        let (f, f1, f2) = self.kinetic_profile(kin.value);
        let mut jet = kin.compose(f, f1, f2);
        let (u, du, d2u) = self.potential.eval(t, chart, q);
        jet.value -= u;
        jet.d_q -= du;
        jet.d_qq -= d2u;
        jet
    }

    fn d_t(&self, t: f64, _chart: usize, q: &Vector, _v: &Vector) -> f64 {
        -self.potential.d_t(t, q)
    }

    fn d_tv(&self, _t: f64, _chart: usize, q: &Vector, _v: &Vector) -> Vector {
        Vector::zeros(q.len())
    }

    fn autonomous(&self) -> bool {
        self.potential.autonomous()
    }

    fn describe(&self) -> String {
        format!(
            "{}|v|^4/4 + {}|v|^2/2 - U, U = {:?} on {}",
            self.quartic,
            self.quadratic,
            self.potential,
            self.manifold.name()
        )
    }
}

/// `c · L` for a positive constant `c`.
#[derive(Debug)]
pub struct ScaledLagrangian {
    pub inner: Lagrangian,
    pub factor: f64,
}

impl LagrangianModel for ScaledLagrangian {
    fn manifold(&self) -> &Manifold {
        self.inner.manifold()
    }

    fn value(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> f64 {
        self.factor * self.inner.value(t, chart, q, v)
    }

    fn first(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> FirstJet {
        let f = self.inner.first(t, chart, q, v);
        FirstJet {
            value: f.value * self.factor,
            d_q: f.d_q * self.factor,
            d_v: f.d_v * self.factor,
        }
    }

    fn jet(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> Jet {
        self.inner.jet(t, chart, q, v).scale(self.factor)
    }

    fn d_t(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> f64 {
        self.factor * self.inner.d_t(t, chart, q, v)
    }

    fn d_tv(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> Vector {
        self.inner.d_tv(t, chart, q, v) * self.factor
    }

    fn autonomous(&self) -> bool {
        self.inner.autonomous()
    }

    fn time_periodic(&self) -> bool {
        self.inner.time_periodic()
    }

    fn derivative_mode(&self) -> DerivativeMode {
        self.inner.derivative_mode()
    }

    fn describe(&self) -> String {
        format!("{} * ({})", self.factor, self.inner.describe())
    }
}

/// Wraps a model and forces finite-difference derivatives; used to compare
/// analytic derivatives against the fallback.
#[derive(Debug)]
pub struct FiniteDifferenceLagrangian(pub Lagrangian);

impl LagrangianModel for FiniteDifferenceLagrangian {
    fn manifold(&self) -> &Manifold {
        self.0.manifold()
    }

    fn value(&self, t: f64, chart: usize, q: &Vector, v: &Vector) -> f64 {
        self.0.value(t, chart, q, v)
    }

    fn autonomous(&self) -> bool {
        self.0.autonomous()
    }

    fn time_periodic(&self) -> bool {
        self.0.time_periodic()
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::FiniteDifference
    }

    fn describe(&self) -> String {
        format!("finite-difference({})", self.0.describe())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_sphere2, build_torus};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (1.0 + a.abs().max(b.abs()))
    }

    fn compare_with_fd(l: Lagrangian, samples: usize) {
        let fd = FiniteDifferenceLagrangian(l.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = l.manifold().dim();
        for _ in 0..samples {
            let t: f64 = rng.random();
            let q = Vector::from_fn(n, |_, _| rng.random_range(-0.9..0.9));
            let v = Vector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let a = l.jet(t, 0, &q, &v);
            let b = fd.jet(t, 0, &q, &v);
            let scale = 1.0 + a.d_vv.amax() + a.d_qq.amax() + a.d_qv.amax();
            for (x, y) in a
                .d_q
                .iter()
                .zip(b.d_q.iter())
                .chain(a.d_v.iter().zip(b.d_v.iter()))
            {
                assert!(rel_err(*x, *y) < 1e-5, "first derivative {x} vs {y}");
            }
            assert!((&a.d_vv - &b.d_vv).amax() / scale < 1e-5);
            assert!((&a.d_qv - &b.d_qv).amax() / scale < 1e-5);
            assert!((&a.d_qq - &b.d_qq).amax() / scale < 1e-5);
            assert!((&a.d_vv - a.d_vv.transpose()).amax() < 1e-8);
        }
    }

    #[test]
    fn mechanical_derivatives_match_finite_differences() {
        let m = build_torus(2).unwrap();
        compare_with_fd(
            Arc::new(PolynomialLagrangian::mechanical(
                m,
                Potential::Cos2 { epsilon: 0.1 },
            )),
            100,
        );
    }

    #[test]
    fn quartic_sphere_derivatives_match_finite_differences() {
        let m = build_sphere2();
        compare_with_fd(
            Arc::new(PolynomialLagrangian::quartic(
                m,
                1.0,
                1.0,
                Potential::Height { epsilon: 0.3 },
            )),
            100,
        );
    }

    #[test]
    fn time_dependent_potential_derivatives() {
        let m = build_torus(1).unwrap();
        let l = PolynomialLagrangian::mechanical(m, Potential::TimeCos2 { epsilon: 0.5 });
        let q = Vector::from_element(1, 0.2);
        let v = Vector::from_element(1, 1.0);
        let h = 1e-6;
        let fd = (l.value(0.3 + h, 0, &q, &v) - l.value(0.3 - h, 0, &q, &v)) / (2.0 * h);
        assert!((l.d_t(0.3, 0, &q, &v) - fd).abs() < 1e-7);
        assert!(!l.autonomous());
    }
}
