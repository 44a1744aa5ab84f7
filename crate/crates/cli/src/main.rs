use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tonelli::dynamics::{
    estimate_r_a, hamiltonian_integrate, integrate, Flow, FlowState, IntegratorOptions,
};
use tonelli::geometry::ChartPoint;
use tonelli::harness::{self, emit_report, property_suite, run_scenario, summary, ScenarioConfig};
use tonelli::models::{build_hamiltonian, build_lagrangian, check_tonelli};
use tonelli::modification::build_lagrangian_modification;
use tonelli::pathspace::DiscretePath;
use tonelli::solver::{morse_index, CriticalPointRecord};

#[derive(Parser)]
#[command(
    name = "tonelli",
    version,
    about = "Critical points of Tonelli action functionals"
)]
struct Cli {
    /// Scenario configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Segments of the solution mesh.
    #[arg(long, global = true)]
    mesh: Option<usize>,
    /// Points per dimension of the reachable-set seed grid.
    #[arg(long, global = true)]
    grid_density: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelSource {
    /// Builtin scenario supplying the model when no --config is given.
    #[arg(long, default_value = "torus-periodic")]
    scenario: String,
}

#[derive(Subcommand)]
enum Command {
    /// Sampled Tonelli checks of the configured Lagrangian.
    CheckLagrangian {
        #[command(flatten)]
        source: ModelSource,
    },
    /// Build the convex quadratic modification at radius R.
    Modify {
        #[arg(long = "R")]
        r: f64,
        /// Print the clause-by-clause verification and fail on violations.
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        source: ModelSource,
    },
    /// Integrate the Euler-Lagrange (or Hamiltonian) flow.
    Flow {
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, default_value_t = 1.0)]
        t1: f64,
        #[arg(long, default_value_t = 0)]
        chart: usize,
        /// Base point, comma separated chart coordinates.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q: Vec<f64>,
        /// Velocity (or momentum with --hamiltonian), comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        v: Vec<f64>,
        #[arg(long)]
        hamiltonian: bool,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        source: ModelSource,
    },
    /// Estimate the speed bound R(A) of the reachable set.
    EstimateRa {
        #[arg(long = "A")]
        a: f64,
        /// Defaults to the sampled C(1) of the model.
        #[arg(long = "C1")]
        c1: Option<f64>,
        #[command(flatten)]
        source: ModelSource,
    },
    /// Run the full pipeline on --config and write a report.
    Solve,
    /// Morse indices of stored records under the configured model.
    Index {
        /// records.jsonl from a previous run.
        #[arg(long)]
        records: PathBuf,
        #[command(flatten)]
        source: ModelSource,
    },
    /// Run a builtin scenario and compare with its expectation table.
    Scenario { name: String },
    /// Run the property suite.
    Suite,
}

impl Cli {
    fn scenario(&self, builtin: &str) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?
            }
            None => ScenarioConfig::builtin(builtin)?,
        };
        if let Some(s) = self.seed {
            cfg = cfg.with_seed(s);
        }
        if let Some(n) = self.mesh {
            cfg = cfg.with_mesh(n);
        }
        if let Some(d) = self.grid_density {
            cfg = cfg.with_grid_density(d);
        }
        Ok(cfg)
    }
}

fn print_json(value: serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn run(cli: &Cli, cfg: ScenarioConfig) -> Result<bool> {
    let manifest = run_scenario(&cfg)?;
    let dir = harness::output_dir(&cfg, cli.out.clone());
    emit_report(&manifest, &dir).with_context(|| format!("writing report to {}", dir.display()))?;
    print!("{}", summary(&manifest));
    println!("report written to {}", dir.display());
    Ok(manifest.passed)
}

fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::CheckLagrangian { source } => {
            let cfg = cli.scenario(&source.scenario)?;
            let l = build_lagrangian(&cfg.model)?;
            let report = check_tonelli(l.as_ref(), &cfg.options.sample)?;
            print_json(serde_json::to_value(&report)?)?;
            Ok(report.convexity.passed() && report.superlinearity.passed())
        }
        Command::Modify { r, check, source } => {
            let cfg = cli.scenario(&source.scenario)?;
            let l = build_lagrangian(&cfg.model)?;
            let c1 = check_tonelli(l.as_ref(), &cfg.options.sample)?.c1();
            let m = build_lagrangian_modification(&l, *r, c1, &cfg.options.sample)?;
            print_json(serde_json::to_value(m.params())?)?;
            if *check {
                let mut out = std::io::stdout().lock();
                for c in &m.report.clauses {
                    writeln!(out, "{}", serde_json::to_string(c)?)?;
                }
            }
            Ok(m.report.passed())
        }
        Command::Flow {
            t0,
            t1,
            chart,
            q,
            v,
            hamiltonian,
            tol,
            source,
        } => {
            let cfg = cli.scenario(&source.scenario)?;
            if q.len() != v.len() || q.is_empty() {
                bail!("--q and --v need the same, nonzero number of components");
            }
            let start = FlowState::new(*t0, ChartPoint::new(*chart, q), v);
            let opts = IntegratorOptions::with_tol(*tol);
            let mut out = std::io::stdout().lock();
            if *hamiltonian {
                let h = build_hamiltonian(&cfg.model)?;
                let traj = hamiltonian_integrate(h.as_ref(), &start, *t1, &opts)?;
                for r in traj.records(Flow::Hamiltonian(h.as_ref())) {
                    writeln!(out, "{}", serde_json::to_string(&r)?)?;
                }
            } else {
                let l = build_lagrangian(&cfg.model)?;
                let traj = integrate(l.as_ref(), &start, *t1, &opts)?;
                for r in traj.records(Flow::Lagrangian(l.as_ref())) {
                    writeln!(out, "{}", serde_json::to_string(&r)?)?;
                }
            }
            Ok(true)
        }
        Command::EstimateRa { a, c1, source } => {
            let cfg = cli.scenario(&source.scenario)?;
            let l = build_lagrangian(&cfg.model)?;
            let c1 = match c1 {
                Some(c) => *c,
                None => check_tonelli(l.as_ref(), &cfg.options.sample)?.c1(),
            };
            print_json(serde_json::to_value(estimate_r_a(
                l.as_ref(),
                *a,
                c1,
                &cfg.options.grid,
            )?)?)?;
            Ok(true)
        }
        Command::Solve => {
            if cli.config.is_none() {
                bail!("solve needs --config");
            }
            run(cli, cli.scenario("")?)
        }
        Command::Index { records, source } => {
            let cfg = cli.scenario(&source.scenario)?;
            let l = build_lagrangian(&cfg.model)?;
            let bc = cfg.bc.build(l.manifold())?;
            let file = std::fs::File::open(records)
                .with_context(|| format!("opening {}", records.display()))?;
            let mut stable = true;
            for line in BufReader::new(file).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CriticalPointRecord = serde_json::from_str(&line)?;
                let path = DiscretePath::from_record(l.manifold().clone(), &rec.path)?;
                let index = morse_index(l.as_ref(), &bc, &path, &cfg.options.solver)?;
                stable &= index.stable;
                println!(
                    "{}",
                    serde_json::json!({ "action": rec.action, "morse_index": index })
                );
            }
            Ok(stable)
        }
        Command::Scenario { name } => run(cli, cli.scenario(name)?),
        Command::Suite => {
            let checks = property_suite();
            for c in &checks {
                println!(
                    "{} {:<40} {:>12.4e} (threshold {:.1e}, {:.2} s)  {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold,
                    c.seconds,
                    c.detail
                );
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
