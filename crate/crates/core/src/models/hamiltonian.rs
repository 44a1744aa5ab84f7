use std::fmt::Debug;
use std::sync::Arc;

use crate::geometry::{Manifold, Vector};

use super::legendre::legendre_coords;
use super::{fd_first, FirstJet, Lagrangian, Potential};

/// Time-dependent Hamiltonian on the cotangent bundle, in chart
/// coordinates. In [`FirstJet`] the `d_v` field holds `∂ₚH`.
pub trait HamiltonianModel: Send + Sync + Debug {
    fn manifold(&self) -> &Manifold;

    fn value(&self, t: f64, chart: usize, q: &Vector, p: &Vector) -> f64;

    fn first(&self, t: f64, chart: usize, q: &Vector, p: &Vector) -> FirstJet {
        fd_first(|q, p| self.value(t, chart, q, p), q, p)
    }

    fn d_t(&self, t: f64, chart: usize, q: &Vector, p: &Vector) -> f64 {
        if self.autonomous() {
            return 0.0;
        }
        let h = 1e-6;
        (self.value(t + h, chart, q, p) - self.value(t - h, chart, q, p)) / (2.0 * h)
    }

    fn autonomous(&self) -> bool;

    fn describe(&self) -> String;

    /// `DH[Y] = p·∂ₚH`.
    fn liouville_pairing(&self, t: f64, chart: usize, q: &Vector, p: &Vector) -> f64 {
        p.dot(&self.first(t, chart, q, p).d_v)
    }

    /// `X_H = (∂ₚH, −∂_qH)`.
    fn vector_field(&self, t: f64, chart: usize, q: &Vector, p: &Vector) -> (Vector, Vector) {
        let f = self.first(t, chart, q, p);
        (f.d_v, -f.d_q)
    }
}

pub type Hamiltonian = Arc<dyn HamiltonianModel>;

/// `DH[Y] − H`.
pub fn action_integrand(
    h: &dyn HamiltonianModel,
    t: f64,
    chart: usize,
    q: &Vector,
    p: &Vector,
) -> f64 {
    let f = h.first(t, chart, q, p);
    p.dot(&f.d_v) - f.value
}

/// `ω(X, Ξ)` for `ω = dp ∧ dq`, vectors given as `(δq, δp)`.
pub fn symplectic_form(x: (&Vector, &Vector), y: (&Vector, &Vector)) -> f64 {
    x.1.dot(y.0) - x.0.dot(y.1)
}

/// `H = |p|²/(2m) + U(t, q)`, dual to `L = m|v|²/2 − U`.
#[derive(Clone, Debug)]
pub struct MechanicalHamiltonian {
    manifold: Manifold,
    pub mass: f64,
    pub potential: Potential,
}

impl MechanicalHamiltonian {
    pub fn new(manifold: Manifold, potential: Potential) -> Self {
        Self {
            manifold,
            mass: 1.0,
            potential,
        }
    }
}

impl HamiltonianModel for MechanicalHamiltonian {
    fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    fn value(&self, t: f64, chart: usize, q: &Vector, p: &Vector) -> f64 {
        let g = self.manifold.metric(chart, q);
        let ginv = g.try_inverse().expect("metric is positive definite");
        p.dot(&(ginv * p)) / (2.0 * self.mass) + self.potential.eval(t, chart, q).0
    }

    fn first(&self, t: f64, chart: usize, q: &Vector, p: &Vector) -> FirstJet {
        let g = self.manifold.metric(chart, q);
        let ginv = g.try_inverse().expect("metric is positive definite");
        let gp = &ginv * p;
        let dg = self.manifold.metric_derivatives(chart, q);
        let (u, du, _) = self.potential.eval(t, chart, q);
        // ∂(g⁻¹) = −g⁻¹ ∂g g⁻¹
        let d_q = Vector::from_iterator(
            q.len(),
            dg.iter().map(|d| -gp.dot(&(d * &gp)) / (2.0 * self.mass)),
        ) + du;
        FirstJet {
            value: p.dot(&gp) / (2.0 * self.mass) + u,
            d_q,
            d_v: gp / self.mass,
        }
    }

    fn d_t(&self, t: f64, _chart: usize, q: &Vector, _p: &Vector) -> f64 {
        self.potential.d_t(t, q)
    }

    fn autonomous(&self) -> bool {
        self.potential.autonomous()
    }

    fn describe(&self) -> String {
        format!(
            "|p|^2/(2*{}) + U, U = {:?} on {}",
            self.mass,
            self.potential,
            self.manifold.name()
        )
    }
}

/// Fenchel dual `H(t,q,p) = max_v (p·v − L)`, evaluated through the
/// Legendre transform. Evaluation returns NaN where Newton fails.
#[derive(Debug)]
pub struct FenchelDual {
    pub lagrangian: Lagrangian,
}

impl FenchelDual {
    pub fn new(lagrangian: Lagrangian) -> Self {
        Self { lagrangian }
    }

    fn velocity(&self, t: f64, chart: usize, q: &Vector, p: &Vector) -> Option<(Vector, f64)> {
        legendre_coords(self.lagrangian.as_ref(), t, chart, q, p, None).ok()
    }
}

impl HamiltonianModel for FenchelDual {
    fn manifold(&self) -> &Manifold {
        self.lagrangian.manifold()
    }

    fn value(&self, t: f64, chart: usize, q: &Vector, p: &Vector) -> f64 {
        self.velocity(t, chart, q, p).map_or(f64::NAN, |(_, h)| h)
    }

    fn first(&self, t: f64, chart: usize, q: &Vector, p: &Vector) -> FirstJet {
        match self.velocity(t, chart, q, p) {
            Some((v, h)) => FirstJet {
                value: h,
                d_q: -self.lagrangian.first(t, chart, q, &v).d_q,
                d_v: v,
            },
            None => FirstJet {
                value: f64::NAN,
                d_q: Vector::from_element(q.len(), f64::NAN),
                d_v: Vector::from_element(q.len(), f64::NAN),
            },
        }
    }

    fn d_t(&self, t: f64, chart: usize, q: &Vector, p: &Vector) -> f64 {
        match self.velocity(t, chart, q, p) {
            Some((v, _)) => -self.lagrangian.d_t(t, chart, q, &v),
            None => f64::NAN,
        }
    }

    fn autonomous(&self) -> bool {
        self.lagrangian.autonomous()
    }

    fn describe(&self) -> String {
        format!("Fenchel dual of [{}]", self.lagrangian.describe())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_sphere2, build_torus};
    use crate::models::expr::ExprHamiltonian;
    use crate::models::PolynomialLagrangian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn action_integrand_of_mechanical_hamiltonian() {
        let m = build_torus(2).unwrap();
        let h = MechanicalHamiltonian::new(m, Potential::Cos2 { epsilon: 0.3 });
        let q = Vector::from_vec(vec![0.1, 0.4]);
        let p = Vector::from_vec(vec![1.5, -2.0]);
        let (u, _, _) = Potential::Cos2 { epsilon: 0.3 }.eval(0.0, 0, &q);
        assert!(
            (action_integrand(&h, 0.0, 0, &q, &p) - (p.norm_squared() / 2.0 - u)).abs() < 1e-12
        );
    }

    #[test]
    fn hamiltonian_field_is_symplectic_gradient() {
        let m = build_sphere2();
        let h = MechanicalHamiltonian::new(m, Potential::Height { epsilon: 0.7 });
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let q = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let p = Vector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let xi = (
                Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
                Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
            );
            let (dq, dp) = h.vector_field(0.0, 0, &q, &p);
            let f = h.first(0.0, 0, &q, &p);
            let dh = f.d_q.dot(&xi.0) + f.d_v.dot(&xi.1);
            assert!((symplectic_form((&dq, &dp), (&xi.0, &xi.1)) + dh).abs() < 1e-8);
        }
    }

    #[test]
    fn analytic_first_derivatives_match_differences() {
        let m = build_sphere2();
        let h = MechanicalHamiltonian::new(m, Potential::Height { epsilon: 0.7 });
        let q = Vector::from_vec(vec![0.3, -0.6]);
        let p = Vector::from_vec(vec![1.0, 2.0]);
        let a = h.first(0.0, 0, &q, &p);
        let b = fd_first(|q, p| h.value(0.0, 0, q, p), &q, &p);
        assert!((&a.d_q - &b.d_q).amax() < 1e-7);
        assert!((&a.d_v - &b.d_v).amax() < 1e-7);
    }

    #[test]
    fn fenchel_dual_of_mechanical_lagrangian() {
        let m = build_sphere2();
        let pot = Potential::Height { epsilon: 0.4 };
        let l: Lagrangian = Arc::new(PolynomialLagrangian::mechanical(m.clone(), pot.clone()));
        let dual = FenchelDual::new(l.clone());
        let h = MechanicalHamiltonian::new(m, pot);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let q = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let p = Vector::from_fn(2, |_, _| rng.random_range(-4.0..4.0));
            let a = dual.first(0.0, 0, &q, &p);
            let b = h.first(0.0, 0, &q, &p);
            assert!((a.value - b.value).abs() < 1e-9);
            assert!((&a.d_q - &b.d_q).amax() < 1e-8);
            assert!((&a.d_v - &b.d_v).amax() < 1e-9);
        }
    }

    #[test]
    fn radial_identity_for_action_integrand() {
        let m = build_torus(2).unwrap();
        let h =
            ExprHamiltonian::new(m, "(p0^2 + p1^2)^2/4 + (p0^2+p1^2)/2 + sin(2*pi*q0)*p0").unwrap();
        let q = Vector::from_vec(vec![0.2, 0.7]);
        let dir = Vector::from_vec(vec![0.6, 0.8]);
        let g = |s: f64| h.value(0.0, 0, &q, &(&dir * s));
        for i in 1..=20 {
            let s = 0.25 * i as f64;
            let e = 1e-5 * s;
            let gp = (g(s + e) - g(s - e)) / (2.0 * e);
            let f = action_integrand(&h, 0.0, 0, &q, &(&dir * s));
            let lhs = gp * s - g(s);
            assert!(
                (lhs - f).abs() / (1.0 + f.abs()) < 1e-5,
                "s = {s}: {lhs} vs {f}"
            );
        }
    }
}
