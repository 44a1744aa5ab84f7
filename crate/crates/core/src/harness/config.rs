//! Scenario configuration: model, boundary condition, sweep families,
//! solver options and the expectation table, all as TOML.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, Manifold, Matrix, RoundSphere, Vector};
use crate::models::ModelConfig;
use crate::pathspace::{BoundaryCondition, DiscretePath, EndConstraint};
use crate::solver::families::{
    seeded_perturbation, sphere_detour, sphere_pencil, torus_translation,
};
use crate::solver::{PipelineOptions, SweepFamily};

/// A point given either in chart coordinates or, on the sphere, by its
/// embedding in ℝ³.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointConfig {
    Embedded { embedding: [f64; 3] },
    Chart { chart: usize, coords: Vec<f64> },
}

impl PointConfig {
    pub fn resolve(&self, m: &Manifold) -> Result<ChartPoint> {
        match self {
            PointConfig::Chart { chart, coords } => {
                if coords.len() != m.dim() || *chart >= m.charts().len() {
                    return Err(Error::Config(format!(
                        "point {coords:?} in chart {chart} does not fit {}",
                        m.name()
                    )));
                }
                m.rebase(&ChartPoint::new(*chart, coords))
            }
            PointConfig::Embedded { embedding } => {
                if m.name() != "sphere2" {
                    return Err(Error::Config(
                        "embedded points are only defined on sphere2".into(),
                    ));
                }
                let norm = embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
                if !(norm > 0.0) {
                    return Err(Error::Config("embedded point must be nonzero".into()));
                }
                Ok(RoundSphere::new().from_embedding(embedding.map(|x| x / norm)))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EndConfig {
    Point { point: PointConfig },
    Free,
    Affine { a: Vec<Vec<f64>>, b: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BcConfig {
    Periodic,
    Neumann,
    Fixed {
        q0: PointConfig,
        q1: PointConfig,
    },
    Product {
        q0: EndConfig,
        q1: EndConfig,
    },
    /// `A (q₀, q₁) = b` in chart-0 coordinates.
    General {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
}

fn matrix(rows: &[Vec<f64>], cols: usize) -> Result<Matrix> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!(
            "constraint rows must have {cols} entries"
        )));
    }
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl EndConfig {
    fn build(&self, m: &Manifold) -> Result<EndConstraint> {
        Ok(match self {
            EndConfig::Point { point } => EndConstraint::Point(point.resolve(m)?),
            EndConfig::Free => EndConstraint::Free,
            EndConfig::Affine { a, b } => {
                if a.len() != b.len() {
                    return Err(Error::Config(
                        "affine constraint: a and b differ in length".into(),
                    ));
                }
                EndConstraint::Affine {
                    a: matrix(a, m.dim())?,
                    b: Vector::from_column_slice(b),
                }
            }
        })
    }
}

impl BcConfig {
    pub fn build(&self, m: &Manifold) -> Result<BoundaryCondition> {
        Ok(match self {
            BcConfig::Periodic => BoundaryCondition::Periodic,
            BcConfig::Neumann => BoundaryCondition::Neumann,
            BcConfig::Fixed { q0, q1 } => BoundaryCondition::FixedEndpoints {
                q0: q0.resolve(m)?,
                q1: q1.resolve(m)?,
            },
            BcConfig::Product { q0, q1 } => BoundaryCondition::Product {
                q0: q0.build(m)?,
                q1: q1.build(m)?,
            },
            BcConfig::General { a, b } => {
                if a.len() != b.len() {
                    return Err(Error::Config(
                        "general constraint: a and b differ in length".into(),
                    ));
                }
                BoundaryCondition::General {
                    a: matrix(a, 2 * m.dim())?,
                    b: Vector::from_column_slice(b),
                }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    /// Degree-0 seed: a constant path, optionally perturbed by seeded
    /// Fourier noise.
    ConstantSeed {
        point: PointConfig,
        #[serde(default)]
        perturbation: f64,
    },
    /// Constant loops translated along coordinate axes of a flat torus.
    TorusTranslation {
        axes: Vec<usize>,
        offset: f64,
        points: usize,
    },
    /// Circles on the sphere through both fixed endpoints.
    SpherePencil { points: usize },
    /// Normal detours around the great-circle route of the given degree.
    SphereDetour {
        degree: usize,
        points: usize,
        rho: f64,
        #[serde(default)]
        reparam: f64,
    },
}

impl FamilySpec {
    pub fn degree(&self) -> usize {
        match self {
            FamilySpec::ConstantSeed { .. } => 0,
            FamilySpec::TorusTranslation { axes, .. } => axes.len(),
            FamilySpec::SpherePencil { .. } => 1,
            FamilySpec::SphereDetour { degree, .. } => *degree,
        }
    }

    pub fn build(
        &self,
        m: &Manifold,
        bc: &BoundaryCondition,
        segments: usize,
        seed: u64,
    ) -> Result<SweepFamily> {
        let endpoints = || match bc {
            BoundaryCondition::FixedEndpoints { q0, q1 } => Ok((q0, q1)),
            _ => Err(Error::Config("sphere families need fixed endpoints".into())),
        };
        match self {
            FamilySpec::ConstantSeed {
                point,
                perturbation,
            } => {
                let path = DiscretePath::constant(m.clone(), segments, &point.resolve(m)?)?;
                let path = if *perturbation != 0.0 {
                    let periodic = matches!(bc, BoundaryCondition::Periodic);
                    seeded_perturbation(&path, seed, *perturbation, periodic)?
                } else {
                    path
                };
                Ok(SweepFamily::seed("constant", bc.apply(&path)?))
            }
            FamilySpec::TorusTranslation {
                axes,
                offset,
                points,
            } => torus_translation(m, axes, *offset, *points, segments),
            FamilySpec::SpherePencil { points } => {
                let (q0, q1) = endpoints()?;
                sphere_pencil(m, q0, q1, *points, segments)
            }
            FamilySpec::SphereDetour {
                degree,
                points,
                rho,
                reparam,
            } => {
                let (q0, q1) = endpoints()?;
                sphere_detour(m, q0, q1, *degree, *points, *rho, *reparam, segments)
            }
        }
    }
}

/// What a scenario run must reproduce. Empty fields are not checked.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expectation {
    pub min_certified: Option<usize>,
    /// Expected actions in increasing order.
    pub actions: Vec<f64>,
    pub action_abs_tol: Option<f64>,
    pub action_rel_tol: Option<f64>,
    /// Morse indices in the order of `actions`.
    pub indices: Vec<usize>,
    pub strictly_increasing: bool,
    pub max_conormal_residual: Option<f64>,
    pub stable_indices: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; defaults to `$TONELLI_OUT/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub model: ModelConfig,
    pub bc: BcConfig,
    #[serde(default)]
    pub families: Vec<FamilySpec>,
    #[serde(default)]
    pub options: PipelineOptions,
    #[serde(default)]
    pub expect: Expectation,
}

const BUILTIN: &[(&str, &str)] = &[
    (
        "torus-periodic",
        include_str!("../../scenarios/torus-periodic.toml"),
    ),
    (
        "torus-neumann",
        include_str!("../../scenarios/torus-neumann.toml"),
    ),
    (
        "sphere-endpoints",
        include_str!("../../scenarios/sphere-endpoints.toml"),
    ),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

impl ScenarioConfig {
    pub fn builtin(name: &str) -> Result<Self> {
        let (_, src) = BUILTIN.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            Error::Config(format!(
                "unknown scenario `{name}`; known: {}",
                builtin_names().join(", ")
            ))
        })?;
        Self::from_toml(src)
    }

    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mesh(mut self, segments: usize) -> Self {
        self.options.segments = segments;
        self
    }

    pub fn with_grid_density(mut self, points_per_dim: usize) -> Self {
        self.options.grid.points_per_dim = points_per_dim;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_and_round_trip() {
        for name in builtin_names() {
            let cfg = ScenarioConfig::builtin(name).unwrap();
            assert_eq!(cfg.name, name);
            let back = ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_toml().unwrap(), cfg.to_toml().unwrap());
        }
    }

    #[test]
    fn hash_tracks_the_seed() {
        let a = ScenarioConfig::builtin("torus-periodic").unwrap();
        let b = a.clone().with_seed(a.seed + 1);
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap(), a.clone().hash().unwrap());
    }

    #[test]
    fn rejects_unknown_keys() {
        let src = "name = \"x\"\nbogus = 1\n[model]\nmanifold = \"torus2\"\nlagrangian = \"mechanical\"\n[bc]\nkind = \"periodic\"\n";
        assert!(ScenarioConfig::from_toml(src).is_err());
    }
}
