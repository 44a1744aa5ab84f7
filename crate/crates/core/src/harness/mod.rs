//! Scenario runner, result persistence and the property suite.
//!
//! A scenario is a TOML [`ScenarioConfig`]; [`run_scenario`] executes the
//! pipeline and compares the outcome against the expectation table, and
//! [`emit_report`] writes machine-readable records, a manifest, a
//! human-readable summary and CSV plot tables.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::ChartPoint;
use crate::models::build_lagrangian;
use crate::pathspace::BoundaryCondition;
use crate::solver::{solve_pipeline, PipelineResult, SweepFamily};

pub mod config;
pub mod report;
pub mod suite;

pub use config::{BcConfig, EndConfig, Expectation, FamilySpec, PointConfig, ScenarioConfig};
pub use report::{emit_report, summary};
pub use suite::{property_suite, SuiteCheck};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "TONELLI_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectationCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub config_hash: String,
    pub config: ScenarioConfig,
    pub result: PipelineResult,
    pub checks: Vec<ExpectationCheck>,
    pub passed: bool,
}

impl RunManifest {
    /// Wall-clock seconds per stage.
    pub fn timings(&self) -> &[(String, f64)] {
        &self.result.timings
    }
}

/// Output directory for a run: the explicit override, then the config,
/// then `$TONELLI_OUT/<name>`, then `out/<name>`.
pub fn output_dir(cfg: &ScenarioConfig, explicit: Option<PathBuf>) -> PathBuf {
    if let Some(p) = explicit {
        return p;
    }
    if let Some(p) = &cfg.output {
        return PathBuf::from(p);
    }
    let root = std::env::var_os(OUTPUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"));
    root.join(&cfg.name)
}

fn default_seed_family(cfg: &ScenarioConfig, bc: &BoundaryCondition) -> Result<SweepFamily> {
    let m = crate::geometry::manifold_by_name(&cfg.model.manifold)?;
    let start = match bc {
        BoundaryCondition::FixedEndpoints { q0, .. } => q0.clone(),
        _ => ChartPoint::new(0, &vec![0.1; m.dim()]),
    };
    let spec = FamilySpec::ConstantSeed {
        point: PointConfig::Chart {
            chart: start.chart,
            coords: start.coords.as_slice().to_vec(),
        },
        perturbation: 0.0,
    };
    spec.build(&m, bc, cfg.options.segments, cfg.seed)
}

/// Builds the model, boundary condition and families of `cfg`.
pub fn prepare(
    cfg: &ScenarioConfig,
) -> Result<(
    crate::models::Lagrangian,
    BoundaryCondition,
    Vec<SweepFamily>,
)> {
    let l = build_lagrangian(&cfg.model)?;
    let m = l.manifold().clone();
    let bc = cfg.bc.build(&m)?;
    let n = cfg.options.segments;
    let n_family = cfg.options.solver.family_segments.unwrap_or((n / 4).max(8));
    let mut families = Vec::with_capacity(cfg.families.len());
    for spec in &cfg.families {
        let mesh = if spec.degree() == 0 { n } else { n_family };
        families.push(spec.build(&m, &bc, mesh, cfg.seed)?);
    }
    if families.is_empty() {
        families.push(default_seed_family(cfg, &bc)?);
    }
    Ok((l, bc, families))
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunManifest> {
    let (l, bc, families) = prepare(cfg).map_err(|e| e.in_stage("setup"))?;
    let result = solve_pipeline(&l, &bc, &families, &cfg.options)?;
    let checks = evaluate(
        &cfg.expect,
        &result,
        l.manifold().dim(),
        cfg.options.solver.refine_tol,
    );
    Ok(RunManifest {
        scenario: cfg.name.clone(),
        config_hash: cfg.hash()?,
        config: cfg.clone(),
        passed: checks.iter().all(|c| c.passed),
        result,
        checks,
    })
}

/// Runs a builtin scenario by name.
pub fn run_named(name: &str) -> Result<RunManifest> {
    run_scenario(&ScenarioConfig::builtin(name)?)
}

fn check(name: &str, passed: bool, detail: String) -> ExpectationCheck {
    ExpectationCheck {
        name: name.into(),
        passed,
        detail,
    }
}

/// Compares a pipeline result with the expectation table. Structural
/// invariants (gradient, certificate, index gap) are always checked.
pub fn evaluate(
    expect: &Expectation,
    result: &PipelineResult,
    dim: usize,
    refine_tol: f64,
) -> Vec<ExpectationCheck> {
    let recs = &result.records;
    let certified: Vec<_> = recs.iter().filter(|r| r.certified()).collect();
    let mut out = Vec::new();

    let tol = refine_tol;
    let worst_grad = recs.iter().map(|r| r.gradient_norm).fold(0.0, f64::max);
    out.push(check(
        "gradient",
        worst_grad < tol,
        format!("max gradient norm {worst_grad:.3e} (tolerance {tol:e})"),
    ));

    let gaps: Vec<String> = recs
        .iter()
        .filter(|r| {
            r.morse_index.m_star < r.morse_index.m
                || r.morse_index.m_star - r.morse_index.m > 2 * dim
        })
        .map(|r| format!("({}, {})", r.morse_index.m, r.morse_index.m_star))
        .collect();
    out.push(check(
        "index gap",
        gaps.is_empty(),
        if gaps.is_empty() {
            format!("0 <= m* - m <= {} for every record", 2 * dim)
        } else {
            format!("violated by {}", gaps.join(", "))
        },
    ));

    let transparency = certified
        .iter()
        .all(|r| r.certificate.action_gap < 1e-9 && r.max_speed < result.r);
    out.push(check(
        "certificates",
        transparency,
        format!(
            "{} of {} records certified; certified speeds below R = {:.4} with action gap < 1e-9",
            certified.len(),
            recs.len(),
            result.r
        ),
    ));

    if let Some(k) = expect.min_certified {
        out.push(check(
            "multiplicity",
            certified.len() >= k,
            format!("{} distinct certified solutions, need {k}", certified.len()),
        ));
    }

    if !expect.actions.is_empty() {
        let got: Vec<f64> = certified.iter().map(|r| r.action).collect();
        let within = |a: f64, e: f64| {
            let abs = expect.action_abs_tol.is_none_or(|t| (a - e).abs() <= t);
            let rel = expect
                .action_rel_tol
                .is_none_or(|t| (a - e).abs() <= t * e.abs());
            abs && rel
        };
        let ok = got.len() == expect.actions.len()
            && got.iter().zip(&expect.actions).all(|(a, e)| within(*a, *e));
        out.push(check(
            "actions",
            ok,
            format!("got {:?}, expected {:?}", got, expect.actions),
        ));
    }

    if !expect.indices.is_empty() {
        let got: Vec<usize> = certified.iter().map(|r| r.morse_index.m).collect();
        out.push(check(
            "indices",
            got == expect.indices,
            format!("got {:?}, expected {:?}", got, expect.indices),
        ));
    }

    if expect.strictly_increasing {
        let ok = certified.windows(2).all(|w| w[1].action > w[0].action);
        out.push(check(
            "strict increase",
            ok,
            "actions of certified records strictly increase".into(),
        ));
    }

    if let Some(t) = expect.max_conormal_residual {
        let worst = certified
            .iter()
            .map(|r| r.conormal_residual)
            .fold(0.0, f64::max);
        out.push(check(
            "conormal residual",
            worst < t,
            format!("max endpoint momentum residual {worst:.3e}, tolerance {t:e}"),
        ));
    }

    if expect.stable_indices {
        let unstable: Vec<String> = recs
            .iter()
            .filter(|r| !r.morse_index.stable)
            .map(|r| {
                let i = &r.morse_index;
                format!(
                    "({}, {}) vs ({}, {})",
                    i.m, i.m_star, i.m_fine, i.m_star_fine
                )
            })
            .collect();
        out.push(check(
            "index stability",
            unstable.is_empty(),
            if unstable.is_empty() {
                "indices agree under mesh doubling".into()
            } else {
                format!("unstable: {}", unstable.join(", "))
            },
        ));
    }

    let failed: Vec<&str> = result
        .families
        .iter()
        .filter_map(|f| f.error.as_deref())
        .collect();
    out.push(check(
        "families",
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} families solved", result.families.len())
        } else {
            failed.join("; ")
        },
    ));
    out
}
