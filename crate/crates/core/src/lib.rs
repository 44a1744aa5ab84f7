//! Multiple critical points of Tonelli Lagrangian action functionals on
//! compact manifolds under nonlocal boundary conditions.
//!
//! The pipeline modifies a Tonelli Lagrangian `L` into a convex quadratic
//! `L₀` that agrees with `L` on `|v| ≤ R`, runs minimization and sweep-family
//! minimax on the discrete action of `L₀`, and certifies each critical path
//! through an a-priori speed bound so that it is an orbit of `L` itself.
//! Morse indices are computed from the inertia of the discrete Hessian.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod models;
pub mod modification;
pub mod pathspace;
pub mod solver;

pub use error::{Error, Result};

pub(crate) mod serde_vec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Ok(DVector::from_vec(v))
    }
}
