//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use tonelli::geometry::manifold_by_name;
use tonelli::harness::suite::{
    certification_fixture, difference_quotients, energy_drift, flows_agree,
    hamiltonian_modification, lagrangian_modification, legendre_round_trip, radial_identity,
};
use tonelli::harness::{run_named, RunManifest, SuiteCheck};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn suite(checks: &[SuiteCheck], limit: Option<f64>) -> Outcome {
    let seconds: f64 = checks.iter().map(|c| c.seconds).sum();
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    let in_time = limit.is_none_or(|l| seconds < l);
    let mut detail = checks
        .iter()
        .map(|c| format!("{} = {:.3e}", c.name, c.value))
        .collect::<Vec<_>>()
        .join("; ");
    if !failed.is_empty() {
        detail = failed.join("; ");
    }
    if let Some(l) = limit {
        detail.push_str(&format!(" [{seconds:.2} s, limit {l} s]"));
    }
    outcome(failed.is_empty() && in_time, detail)
}

struct Run {
    manifest: Option<RunManifest>,
    error: Option<String>,
    seconds: f64,
}

fn run(name: &str) -> Run {
    let start = Instant::now();
    let res = run_named(name);
    let seconds = start.elapsed().as_secs_f64();
    match res {
        Ok(m) => Run {
            manifest: Some(m),
            error: None,
            seconds,
        },
        Err(e) => Run {
            manifest: None,
            error: Some(e.to_string()),
            seconds,
        },
    }
}

fn failed_checks(m: &RunManifest) -> String {
    m.checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect::<Vec<_>>()
        .join("; ")
}

fn scenario(
    r: &Run,
    limit: Option<f64>,
    extra: impl Fn(&RunManifest) -> Option<String>,
) -> Outcome {
    let Some(m) = &r.manifest else {
        return outcome(false, r.error.clone().unwrap_or_default());
    };
    let mut problems = Vec::new();
    if !m.passed {
        problems.push(failed_checks(m));
    }
    if let Some(p) = extra(m) {
        problems.push(p);
    }
    if let Some(l) = limit {
        if r.seconds >= l {
            problems.push(format!("took {:.1} s, limit {l} s", r.seconds));
        }
    }
    let actions: Vec<String> = m
        .result
        .records
        .iter()
        .map(|c| format!("{:.6}(m={})", c.action, c.morse_index.m))
        .collect();
    let detail = if problems.is_empty() {
        format!("{} [{:.1} s]", actions.join(", "), r.seconds)
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

fn certification(runs: &[&Run]) -> Outcome {
    let mut problems = Vec::new();
    let mut records = 0;
    for r in runs {
        let Some(m) = &r.manifest else {
            problems.push(format!(
                "run failed: {}",
                r.error.clone().unwrap_or_default()
            ));
            continue;
        };
        let res = &m.result;
        for rec in &res.records {
            records += 1;
            let c = &rec.certificate;
            if !(c.max_speed < res.r) || !(c.action_gap < 1e-9) {
                problems.push(format!(
                    "{}: speed {} vs R {}, action gap {:e}",
                    m.scenario, c.max_speed, res.r, c.action_gap
                ));
            }
        }
        let certify = m
            .timings()
            .iter()
            .find(|(k, _)| k == "certify")
            .map_or(0.0, |(_, v)| *v);
        if certify >= res.records.len().max(1) as f64 {
            problems.push(format!("{}: certification took {certify:.2} s", m.scenario));
        }
    }
    let fixture = certification_fixture();
    if !fixture.passed {
        problems.push(fixture.detail.clone());
    }
    if problems.is_empty() {
        outcome(
            true,
            format!(
                "{records} records within R with action gap < 1e-9; {}",
                fixture.detail
            ),
        )
    } else {
        outcome(false, problems.join("; "))
    }
}

fn index_stability(runs: &[&Run]) -> Outcome {
    let mut problems = Vec::new();
    let mut count = 0;
    for r in runs {
        let Some(m) = &r.manifest else {
            problems.push(format!(
                "run failed: {}",
                r.error.clone().unwrap_or_default()
            ));
            continue;
        };
        let n = m.config.options.segments;
        let dim = match manifold_by_name(&m.config.model.manifold) {
            Ok(man) => man.dim(),
            Err(e) => {
                problems.push(e.to_string());
                continue;
            }
        };
        for rec in &m.result.records {
            count += 1;
            let i = &rec.morse_index;
            if !i.stable || i.m != i.m_fine || i.m_star != i.m_star_fine {
                problems.push(format!(
                    "{} action {:.6}: ({}, {}) at N = {n} vs ({}, {}) at N = {}",
                    m.scenario,
                    rec.action,
                    i.m,
                    i.m_star,
                    i.m_fine,
                    i.m_star_fine,
                    2 * n
                ));
            }
            if i.m_star < i.m || i.m_star - i.m > 2 * dim {
                problems.push(format!(
                    "{}: gap violated ({}, {})",
                    m.scenario, i.m, i.m_star
                ));
            }
        }
    }
    if problems.is_empty() {
        outcome(
            true,
            format!("{count} records: indices agree at N and 2N, 0 <= m* - m <= 2n"),
        )
    } else {
        outcome(false, problems.join("; "))
    }
}

fn machine_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map(|d| {
            d.filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("json" | "jsonl" | "csv")
                    ) && p.file_name().and_then(|n| n.to_str()) != Some("timings.json")
                })
                .map(|p| {
                    let name = p.file_name().unwrap().to_string_lossy().into_owned();
                    (name, std::fs::read(&p).unwrap_or_default())
                })
                .collect()
        })
        .unwrap_or_default();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = match tempfile::tempdir() {
        Ok(t) => t,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut outputs = Vec::new();
    for k in 0..2 {
        let dir = tmp.path().join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_tonelli"))
            .args(["scenario", "torus-periodic", "--seed", "7", "--out"])
            .arg(&dir)
            .output();
        match status {
            Ok(o) if o.status.success() => outputs.push(machine_files(&dir)),
            Ok(o) => {
                return outcome(
                    false,
                    format!(
                        "run {k} exited with {}: {}",
                        o.status,
                        String::from_utf8_lossy(&o.stderr)
                    ),
                )
            }
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    if outputs[0].is_empty() {
        return outcome(false, "no machine-readable output written");
    }
    let differing: Vec<&str> = outputs[0]
        .iter()
        .zip(&outputs[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    if outputs[0].len() != outputs[1].len() || !differing.is_empty() {
        return outcome(false, format!("outputs differ: {differing:?}"));
    }
    outcome(
        true,
        format!("byte-identical across two runs: {}", names.join(", ")),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |label: &'static str, o: Outcome| {
        println!(
            "{} {label}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((label, o));
    };

    report(
        "1 gradient/hessian consistency",
        suite(&difference_quotients(), Some(10.0)),
    );
    report(
        "2 modification soundness",
        suite(&[1.0, 5.0, 20.0].map(lagrangian_modification), Some(5.0)),
    );

    let torus = run("torus-periodic");
    let sphere = run("sphere-endpoints");
    let neumann = run("torus-neumann");

    report(
        "3 a-priori certification",
        certification(&[&torus, &sphere, &neumann]),
    );
    report(
        "4 torus periodic multiplicity",
        scenario(&torus, Some(60.0), |m| {
            let found = m.result.records.iter().filter(|r| r.certified()).count();
            (found < 4).then(|| format!("only {found} certified solutions found, need 4"))
        }),
    );
    report(
        "5 sphere endpoint geodesics",
        scenario(&sphere, Some(120.0), |_| None),
    );
    report(
        "6 neumann conormal solutions",
        scenario(&neumann, None, |m| {
            let bad: Vec<String> = m
                .result
                .records
                .iter()
                .filter(|r| r.certified() && !(r.conormal_residual < 1e-6))
                .map(|r| format!("{:e}", r.conormal_residual))
                .collect();
            let certified = m.result.records.iter().filter(|r| r.certified()).count();
            if certified < 3 {
                Some(format!("{certified} certified solutions, need 3"))
            } else if !bad.is_empty() {
                Some(format!("endpoint residuals {}", bad.join(", ")))
            } else {
                None
            }
        }),
    );
    report(
        "7 morse index stability and gap",
        index_stability(&[&torus, &sphere, &neumann]),
    );
    report(
        "8 duality and flows",
        suite(
            &[
                legendre_round_trip(),
                flows_agree(),
                energy_drift(),
                radial_identity(),
            ],
            None,
        ),
    );
    report(
        "9 hamiltonian modification",
        suite(&[hamiltonian_modification()], None),
    );
    report("10 determinism", determinism());

    let failed = results.iter().filter(|(_, o)| !o.passed).count();
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
