use anyhow::Context;
use clap::{Parser, Subcommand};
use roadform::dynamics::BoundSet;
use roadform::mpc::oracle::{compare, SpeedTrackingCase};
use roadform::scenario::ScenarioConfig;
use roadform::sim::{audit_safety, audit_settings, read_trace, run, AuditSettings};
use roadform::Error;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_INVALID: u8 = 2;
const EXIT_ABORTED: u8 = 3;
const EXIT_UNSAFE: u8 = 4;

#[derive(Parser)]
#[command(name = "roadform", version, about = "Formation control simulator for car-like vehicles on roads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trace.csv, timing.csv and summary.json.
    Run {
        /// Scenario file, or `scenario1` / `scenario2` for the bundled ones.
        scenario: String,
        #[arg(long, env = "ROADFORM_OUT", default_value = "out")]
        out: PathBuf,
        /// Override the simulated duration, s.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse a scenario and report every problem found.
    Validate { scenario: String },
    /// Re-run the safety audit on a trace file.
    Audit {
        trace: PathBuf,
        /// Scenario providing partition geometry, footprint and tolerance.
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Compare the solver with brute-force search on a three-knot speed-tracking problem.
    Oracle {
        scenario: String,
        /// Initial speed; defaults to half the cruise speed.
        #[arg(long)]
        v0: Option<f64>,
        /// Grid points per acceleration axis.
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
}

/// A failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let code = match e.downcast_ref::<Error>() {
            Some(Error::Scenario(_)) => EXIT_INVALID,
            _ => 1,
        };
        Failure {
            code,
            message: format!("{e:#}"),
        }
    }
}

fn load(scenario: &str) -> anyhow::Result<ScenarioConfig> {
    ScenarioConfig::load(scenario).with_context(|| format!("scenario '{scenario}'"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            duration,
            seed,
        } => cmd_run(&scenario, out, duration, seed),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Audit { trace, scenario } => cmd_audit(trace, scenario.as_deref()),
        Command::Oracle { scenario, v0, points } => cmd_oracle(&scenario, v0, points),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            for line in f.message.lines() {
                eprintln!("roadform: {line}");
            }
            ExitCode::from(f.code)
        }
    }
}

fn cmd_run(scenario: &str, out: PathBuf, duration: Option<f64>, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = load(scenario)?;
    if let Some(d) = duration {
        cfg.sim.duration = d;
    }
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    let built = cfg.build().context("scenario after overrides")?;
    let output = run(&built).context("simulation")?;
    output
        .write(&out)
        .with_context(|| format!("writing results to {}", out.display()))?;
    let s = &output.summary;
    let hard = s.violations.iter().filter(|v| v.kind.is_hard()).count();
    println!(
        "{}: {} ticks, {} records, {} switches, {} solves (median {:.1} ms, p99 {:.1} ms), {} hard / {} total violations -> {}",
        s.scenario,
        s.ticks,
        output.trace.len(),
        s.switch_events.len(),
        s.solver.solves,
        s.solver.median_ms,
        s.solver.p99_ms,
        hard,
        s.violations.len(),
        out.display()
    );
    if let Some(reason) = &s.abort_reason {
        return Err(Failure {
            code: EXIT_ABORTED,
            message: format!("run aborted at {reason}"),
        });
    }
    if hard > 0 {
        return Err(Failure {
            code: EXIT_UNSAFE,
            message: format!("{hard} hard safety violations"),
        });
    }
    Ok(())
}

fn cmd_validate(scenario: &str) -> Result<(), Failure> {
    let cfg = load(scenario)?;
    println!(
        "{}: ok ({} vehicles, {} formations, {} obstacles, {} s)",
        cfg.name,
        cfg.vehicles.len(),
        cfg.formations.len(),
        cfg.obstacles.len(),
        cfg.sim.duration
    );
    Ok(())
}

fn cmd_audit(trace: PathBuf, scenario: Option<&str>) -> Result<(), Failure> {
    let settings = match scenario {
        Some(s) => audit_settings(&load(s)?),
        None => AuditSettings::default(),
    };
    let records = read_trace(&trace)
        .map_err(anyhow::Error::from)
        .with_context(|| format!("reading {}", trace.display()))?;
    let found = audit_safety(&records, &settings);
    for v in &found {
        let other = v.other.map(|o| format!(" vs {o}")).unwrap_or_default();
        println!("t={:.3} {:?} vehicle {}{other}: {:.4}", v.time, v.kind, v.vehicle, v.value);
    }
    let hard = found.iter().filter(|v| v.kind.is_hard()).count();
    println!("{} records, {} violations ({hard} hard)", records.len(), found.len());
    if hard > 0 {
        return Err(Failure {
            code: EXIT_UNSAFE,
            message: format!("{hard} hard safety violations"),
        });
    }
    Ok(())
}

fn cmd_oracle(scenario: &str, v0: Option<f64>, points: usize) -> Result<(), Failure> {
    let cfg = load(scenario)?;
    if points < 2 {
        return Err(Failure {
            code: 1,
            message: "--points must be at least 2".into(),
        });
    }
    let w = cfg.leader_weights;
    let bounds: BoundSet = cfg.bounds;
    let case = SpeedTrackingCase {
        v0: v0.unwrap_or(cfg.cruise_speed / 2.0),
        v_ref: cfg.cruise_speed,
        speed_weight: w.q[2],
        accel_weight: w.r[0],
        dt: cfg.solver.dt(),
        bounds,
    };
    let report = compare(&case, points).context("oracle comparison")?;
    println!(
        "solver cost {:.6}, grid cost {:.6} over {} candidates, gap {:+.3}%",
        report.solver_cost,
        report.grid_cost,
        report.candidates,
        100.0 * report.relative_gap
    );
    println!("solver accel {:?}", report.solver_accel);
    println!("grid accel   {:?}", report.grid_accel);
    Ok(())
}
