//! Builtin model registry keyed by name.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::manifold_by_name;

use super::expr::{ExprHamiltonian, ExprLagrangian};
use super::hamiltonian::{FenchelDual, Hamiltonian, MechanicalHamiltonian};
use super::{Lagrangian, PolynomialLagrangian, Potential};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LagrangianKind {
    Mechanical,
    Quartic,
    Expression,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    Zero,
    Cos2,
    TimeCos2,
    Height,
}

/// Model parameter table, e.g.
/// `manifold = "torus2"`, `lagrangian = "mechanical"`, `potential = "cos2"`,
/// `epsilon = 0.1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub manifold: String,
    pub lagrangian: LagrangianKind,
    #[serde(default = "default_potential")]
    pub potential: PotentialKind,
    #[serde(default)]
    pub epsilon: f64,
    /// Coefficient of `|v|⁴/4` for `quartic`.
    #[serde(default = "one")]
    pub quartic: f64,
    /// Coefficient of `|v|²/2` for `quartic`.
    #[serde(default = "one")]
    pub quadratic: f64,
    /// Lagrangian expression for `expression`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    /// Optional Hamiltonian expression; otherwise the dual of the Lagrangian.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<String>,
}

fn default_potential() -> PotentialKind {
    PotentialKind::Zero
}

fn one() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn mechanical(manifold: &str, potential: PotentialKind, epsilon: f64) -> Self {
        Self {
            manifold: manifold.into(),
            lagrangian: LagrangianKind::Mechanical,
            potential,
            epsilon,
            quartic: 1.0,
            quadratic: 1.0,
            expression: None,
            hamiltonian: None,
        }
    }

    pub fn potential(&self) -> Potential {
        let epsilon = self.epsilon;
        match self.potential {
            PotentialKind::Zero => Potential::Zero,
            PotentialKind::Cos2 => Potential::Cos2 { epsilon },
            PotentialKind::TimeCos2 => Potential::TimeCos2 { epsilon },
            PotentialKind::Height => Potential::Height { epsilon },
        }
    }
}

pub fn build_lagrangian(cfg: &ModelConfig) -> Result<Lagrangian> {
    let m = manifold_by_name(&cfg.manifold)?;
    if cfg.potential == PotentialKind::Height && m.name() != "sphere2" {
        return Err(Error::Config(
            "the height potential needs manifold = \"sphere2\"".into(),
        ));
    }
    Ok(match cfg.lagrangian {
        LagrangianKind::Mechanical => {
            Arc::new(PolynomialLagrangian::mechanical(m, cfg.potential()))
        }
        LagrangianKind::Quartic => Arc::new(PolynomialLagrangian::quartic(
            m,
            cfg.quartic,
            cfg.quadratic,
            cfg.potential(),
        )),
        LagrangianKind::Expression => {
            let src = cfg.expression.as_deref().ok_or_else(|| {
                Error::Config("lagrangian = \"expression\" needs `expression`".into())
            })?;
            Arc::new(ExprLagrangian::new(m, src)?)
        }
    })
}

pub fn build_hamiltonian(cfg: &ModelConfig) -> Result<Hamiltonian> {
    if let Some(src) = &cfg.hamiltonian {
        return ExprHamiltonian::shared(manifold_by_name(&cfg.manifold)?, src);
    }
    if cfg.lagrangian == LagrangianKind::Mechanical {
        let m = manifold_by_name(&cfg.manifold)?;
        return Ok(Arc::new(MechanicalHamiltonian::new(m, cfg.potential())));
    }
    Ok(Arc::new(FenchelDual::new(build_lagrangian(cfg)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vector;

    #[test]
    fn parses_parameter_table() {
        let cfg: ModelConfig = toml::from_str(
            r#"
            manifold = "torus2"
            lagrangian = "mechanical"
            potential = "cos2"
            epsilon = 0.1
            "#,
        )
        .unwrap();
        let l = build_lagrangian(&cfg).unwrap();
        let q = Vector::zeros(2);
        assert!((l.value(0.0, 0, &q, &Vector::zeros(2)) + 0.2).abs() < 1e-15);
        let back: ModelConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn expression_model_and_errors() {
        let mut cfg = ModelConfig::mechanical("torus1", PotentialKind::Zero, 0.0);
        cfg.lagrangian = LagrangianKind::Expression;
        assert!(build_lagrangian(&cfg).is_err());
        cfg.expression = Some("v^2/2 + v^4/4".into());
        assert!(build_lagrangian(&cfg).is_ok());
        let bad = ModelConfig::mechanical("torus2", PotentialKind::Height, 0.1);
        assert!(build_lagrangian(&bad).is_err());
        assert!(toml::from_str::<ModelConfig>(
            "manifold = \"torus2\"\nlagrangian = \"mechanical\"\nbogus = 1"
        )
        .is_err());
    }
}
