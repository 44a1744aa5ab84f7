//! Report files for one scenario run.
//!
//! Machine-readable, deterministic: `manifest.json`, `records.jsonl` and
//! the CSV tables. `timings.json` and `summary.txt` are for people.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::pathspace::PathRecord;
use crate::solver::Provenance;

use super::RunManifest;

fn provenance_label(p: &Provenance) -> String {
    match p {
        Provenance::Minimum { family } => format!("min {family}"),
        Provenance::Minimax { family, degree, .. } => format!("minimax {family} (degree {degree})"),
    }
}

#[derive(Serialize)]
struct SolutionRow<'a> {
    rank: usize,
    action: f64,
    m: usize,
    m_star: usize,
    m_fine: usize,
    m_star_fine: usize,
    gradient_norm: f64,
    conormal_residual: f64,
    max_speed: f64,
    certificate: &'a str,
    provenance: String,
}

#[derive(Serialize)]
struct FamilyRow<'a> {
    family: &'a str,
    degree: usize,
    round: usize,
    max_action: f64,
}

#[derive(Serialize)]
struct SpeedRow {
    rank: usize,
    segment: usize,
    t: f64,
    speed: f64,
    r_a: f64,
    r: f64,
}

/// Segment speeds recomputed from the stored nodes.
fn speeds(rec: &PathRecord) -> Result<Vec<f64>> {
    let m = crate::geometry::manifold_by_name(&rec.manifold)?;
    Ok(crate::pathspace::DiscretePath::from_record(m, rec)?.speeds())
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes all report files into `dir` and returns their paths.
pub fn emit_report(manifest: &RunManifest, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let res = &manifest.result;
    let mut written = Vec::new();
    let mut file = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };

    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(file("manifest.json"), text)?;

    let mut lines = String::new();
    for r in &res.records {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    fs::write(file("records.jsonl"), lines)?;

    let timings: serde_json::Map<String, serde_json::Value> = manifest
        .timings()
        .iter()
        .map(|(k, v)| (k.clone(), serde_json::json!(v)))
        .collect();
    fs::write(
        file("timings.json"),
        serde_json::to_string_pretty(&timings)? + "\n",
    )?;

    write_csv(
        &file("solutions.csv"),
        res.records.iter().enumerate().map(|(i, r)| SolutionRow {
            rank: i,
            action: r.action,
            m: r.morse_index.m,
            m_star: r.morse_index.m_star,
            m_fine: r.morse_index.m_fine,
            m_star_fine: r.morse_index.m_star_fine,
            gradient_norm: r.gradient_norm,
            conormal_residual: r.conormal_residual,
            max_speed: r.max_speed,
            certificate: if r.certified() {
                "CERTIFIED"
            } else {
                "UNCERTIFIED"
            },
            provenance: provenance_label(&r.provenance),
        }),
    )?;

    write_csv(
        &file("family_max.csv"),
        res.families.iter().flat_map(|f| {
            f.max_log.iter().enumerate().map(move |(k, &v)| FamilyRow {
                family: &f.label,
                degree: f.degree,
                round: k,
                max_action: v,
            })
        }),
    )?;

    let mut rows = Vec::new();
    for (i, r) in res.records.iter().enumerate() {
        let s = speeds(&r.path)?;
        let n = s.len() as f64;
        rows.extend(s.into_iter().enumerate().map(|(k, v)| SpeedRow {
            rank: i,
            segment: k,
            t: (k as f64 + 0.5) / n,
            speed: v,
            r_a: res.reachable.r_a,
            r: res.r,
        }));
    }
    write_csv(&file("speed_profiles.csv"), rows)?;

    fs::write(file("summary.txt"), summary(manifest))?;
    Ok(written)
}

/// Human-readable summary of a run.
pub fn summary(manifest: &RunManifest) -> String {
    let res = &manifest.result;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "scenario {} (config {})",
        manifest.scenario,
        &manifest.config_hash[..12]
    );
    let _ = writeln!(
        s,
        "A = {:.6}  C(1) = {:.6}  R_A = {:.6}  R = {:.6}  modification {}",
        res.a,
        res.c1,
        res.reachable.r_a,
        res.r,
        if res.modification.passed {
            "verified"
        } else {
            "FAILED"
        }
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:>4} {:>14} {:>3} {:>3} {:>10} {:>10} {:>11}  provenance",
        "#", "action", "m", "m*", "|grad|", "speed", "certificate"
    );
    for (i, r) in res.records.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:>4} {:>14.8} {:>3} {:>3} {:>10.2e} {:>10.4} {:>11}  {}",
            i,
            r.action,
            r.morse_index.m,
            r.morse_index.m_star,
            r.gradient_norm,
            r.max_speed,
            if r.certified() {
                "CERTIFIED"
            } else {
                "UNCERTIFIED"
            },
            provenance_label(&r.provenance)
        );
    }
    let _ = writeln!(s);
    for f in &res.families {
        let status = match &f.error {
            Some(e) => format!("error: {e}"),
            None => format!(
                "level {:.8} after {} rounds",
                f.level.unwrap_or(f64::NAN),
                f.rounds
            ),
        };
        let _ = writeln!(
            s,
            "family {} (degree {}, {} members): {}",
            f.label, f.degree, f.members, status
        );
    }
    let _ = writeln!(s);
    for c in &manifest.checks {
        let _ = writeln!(
            s,
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let _ = writeln!(
        s,
        "{}",
        if manifest.passed {
            "scenario PASSED"
        } else {
            "scenario FAILED"
        }
    );
    s
}
