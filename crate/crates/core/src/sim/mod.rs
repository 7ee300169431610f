//! Deterministic closed-loop simulation of the formation.
//!
//! Every replanning instant each agent, in priority order, reads its
//! parent's and its watched vehicles' plans from the bus, builds its
//! reference, solves its own problem and publishes the result. Between
//! replans the plant integrates each vehicle under its latest plan. The
//! supervisor runs every tick.

mod audit;
mod bus;
mod config;
mod trace;

pub use audit::{audit_safety, rectangles_overlap, sector_depth, AuditSettings, Pose2, SafetyViolation, ViolationKind};
pub use bus::{MessageBus, Published};
pub use config::{Footprint, SimConfig};
pub use trace::{
    percentile, read_trace, write_summary, write_timing, write_trace, ErrorStats, PairDistance, SolverStats, Summary,
    TimingRecord, TraceRecord, SUMMARY_FORMAT_VERSION, TRACE_COLUMNS, TRACE_FORMAT_VERSION,
};

use crate::dynamics::{integrate_span, ControlInput, Knot, Trajectory, VehicleState};
use crate::error::{Error, Result};
use crate::formation::{formation_error, make_reference, FormationError, FormationSpec};
use crate::mpc::{solve, OcpInstance, OcpSolution, PartitionTerm, SolveStatus};
use crate::reconfig::Supervisor;
use crate::scenario::{Scenario, ScenarioConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::Path;

/// Everything a run produces. `timing` holds wall-clock data and is the
/// only part that differs between identical runs.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub timing: Vec<TimingRecord>,
    pub summary: Summary,
}

impl RunOutput {
    pub const TRACE_FILE: &'static str = "trace.csv";
    pub const TIMING_FILE: &'static str = "timing.csv";
    pub const SUMMARY_FILE: &'static str = "summary.json";

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_trace(&dir.join(Self::TRACE_FILE), &self.trace)?;
        write_timing(&dir.join(Self::TIMING_FILE), &self.timing)?;
        write_summary(&dir.join(Self::SUMMARY_FILE), &self.summary)
    }
}

pub fn audit_settings(config: &ScenarioConfig) -> AuditSettings {
    AuditSettings {
        geometry: config.partition,
        footprint: config.sim.footprint,
        slack: config.sim.audit_slack,
    }
}

/// Runs a built scenario. Aborts (with `completed = false` and the reason
/// in the summary) on a singularity, an infeasible initial state, a heading
/// past the forward-motion limit, or a footprint overlap; the trace then
/// ends at the failing tick.
pub fn run(scenario: &Scenario) -> Result<RunOutput> {
    Simulation::new(scenario)?.run()
}

#[derive(Debug, Clone, Default)]
struct Telemetry {
    status: String,
    iterations: usize,
    cost: f64,
    plan_age: Option<f64>,
    watched: Vec<String>,
    rules: Vec<String>,
    slacks: Vec<String>,
}

struct Simulation<'a> {
    sc: &'a Scenario,
    supervisor: Supervisor,
    bus: MessageBus,
    states: Vec<VehicleState>,
    plans: Vec<Option<OcpSolution>>,
    telemetry: Vec<Telemetry>,
    rng: ChaCha8Rng,
    noise: Vec<Option<Normal<f64>>>,
    trace: Vec<TraceRecord>,
    timing: Vec<TimingRecord>,
    min_distances: Vec<PairDistance>,
}

impl<'a> Simulation<'a> {
    fn new(sc: &'a Scenario) -> Result<Self> {
        let cfg = &sc.config;
        let errors = cfg.validate();
        if !errors.is_empty() {
            return Err(Error::Scenario(errors));
        }
        let n = sc.vehicle_count();
        let supervisor = Supervisor::new(sc.plan.clone(), cfg.partition)?;
        let noise = cfg
            .sim
            .plant_noise
            .iter()
            .map(|&sd| (sd > 0.0).then(|| Normal::new(0.0, sd).expect("validated")))
            .collect();
        let mut min_distances = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                min_distances.push(PairDistance {
                    a,
                    b,
                    min_distance: f64::INFINITY,
                    time: 0.0,
                });
            }
        }
        Ok(Self {
            sc,
            supervisor,
            bus: MessageBus::new(n, cfg.sim.comm_delay),
            states: cfg.vehicles.iter().map(|v| v.initial).collect(),
            plans: vec![None; n],
            telemetry: vec![Telemetry::default(); n],
            rng: ChaCha8Rng::seed_from_u64(cfg.sim.seed),
            noise,
            trace: Vec::new(),
            timing: Vec::new(),
            min_distances,
        })
    }

    fn run(mut self) -> Result<RunOutput> {
        let sim = &self.sc.config.sim;
        let per_replan = sim.ticks_per_replan().expect("validated");
        let ticks = sim.tick_count();
        let mut abort = None;
        let mut done = 0;
        for step in 0..ticks {
            let t = step as f64 * sim.tick;
            if let Err(e) = self.step(t, step % per_replan == 0) {
                log::warn!("run aborted at t={t:.3}: {e}");
                abort = Some(format!("t={t:.3}: {e}"));
                break;
            }
            done = step + 1;
        }
        Ok(self.finish(done, abort))
    }

    fn step(&mut self, t: f64, replan: bool) -> Result<()> {
        let before = self.formation_errors();
        for event in self.supervisor.supervise(t, &before)? {
            log::info!("t={:.3}: formation {} -> {}", event.time, event.from, event.to);
        }
        if replan {
            let spec = self.supervisor.active().clone();
            for &j in &spec.priority {
                self.replan_agent(j, t, &spec)?;
            }
            self.bus.prune(t);
        }
        let errors = self.formation_errors();
        self.record(t, &errors)?;
        self.check_separation(t)?;
        self.advance(t)
    }

    fn formation_errors(&self) -> Vec<FormationError> {
        let spec = self.supervisor.active();
        (0..self.states.len())
            .map(|j| match spec.parents[j] {
                None if spec.virtual_leader => FormationError::new(0.0, self.states[j].r - spec.shape[j].1),
                None => FormationError::default(),
                Some(_) => formation_error(&self.states[j], &self.states[0], spec, j),
            })
            .collect()
    }

    /// Plan of vehicle `i` as seen at `now`, with its age, or the bootstrap
    /// stand-in: the initial state moving at cruise speed with its lateral
    /// offset held.
    fn view_of(&self, i: usize, now: f64) -> Result<(Trajectory, Option<f64>)> {
        if let Some(p) = self.bus.fetch(i, now) {
            return Ok((p.plan.clone(), Some(p.age(now))));
        }
        let cfg = &self.sc.config;
        let x0 = cfg.vehicles[i].initial;
        let dt = cfg.solver.dt();
        let v = cfg.cruise_speed;
        let knots = (0..=cfg.solver.knots)
            .map(|k| Knot {
                state: VehicleState::new(x0.s + v * (now + k as f64 * dt), x0.r, v, 0.0, 0.0),
                control: ControlInput::default(),
            })
            .collect();
        Ok((Trajectory::new(i, now, dt, knots)?, None))
    }

    fn root_reference(&self, j: usize, now: f64, spec: &FormationSpec) -> Result<Trajectory> {
        let cfg = &self.sc.config;
        let dt = cfg.solver.dt();
        let v = cfg.cruise_speed;
        let x0 = self.states[j];
        let lateral = spec.shape[j].1;
        let knots = (0..=cfg.solver.knots)
            .map(|k| Knot {
                state: VehicleState::new(x0.s + v * k as f64 * dt, lateral, v, 0.0, 0.0),
                control: ControlInput::default(),
            })
            .collect();
        Trajectory::new(j, now, dt, knots)
    }

    fn replan_agent(&mut self, j: usize, now: f64, spec: &FormationSpec) -> Result<()> {
        let sc = self.sc;
        let cfg = &sc.config;
        let settings = cfg.solver;
        let (dt, horizon) = (settings.dt(), settings.horizon);
        let weights = sc.weights(j);

        let (reference, plan_age) = match spec.parents[j] {
            None => (self.root_reference(j, now, spec)?, None),
            Some(p) => {
                let offset = (spec.shape[j].0 - spec.shape[p].0, spec.shape[j].1 - spec.shape[p].1);
                let (parent, age) = self.view_of(p, now)?;
                (make_reference(&parent, offset, now, horizon, dt, &sc.road, j)?, age)
            }
        };
        let constraints = self.supervisor.constraints_for(j, weights.slack_penalty);
        let mut partition = Vec::with_capacity(constraints.len());
        for c in &constraints {
            let (pivot, _) = self.view_of(c.watched_vehicle, now)?;
            partition.push(PartitionTerm {
                constraint: *c,
                pivot: pivot.extrapolate(now + horizon, &sc.road)?,
            });
        }
        let inst = OcpInstance {
            vehicle_id: j,
            t0: now,
            x0: self.states[j],
            reference,
            weights,
            bounds: sc.bounds(j),
            obstacles: sc.obstacles.clone(),
            partition,
            geometry: cfg.partition,
            road: &sc.road,
            settings,
        };
        let warm = self.plans[j]
            .as_ref()
            .map(|p| p.shifted(((now - p.trajectory.t0) / dt).round().max(0.0) as usize));
        let sol = solve(&inst, warm.as_ref())?;
        self.timing.push(TimingRecord {
            time: now,
            vehicle: j,
            solve_ms: sol.solve_time * 1e3,
            iterations: sol.iterations,
            status: sol.status.to_string(),
        });
        if sol.status == SolveStatus::InfeasibleHard {
            return Err(Error::InfeasibleInitialState(format!(
                "vehicle {j}: {}",
                inst.initial_state_issues().join("; ")
            )));
        }
        self.telemetry[j] = Telemetry {
            status: sol.status.to_string(),
            iterations: sol.iterations,
            cost: sol.cost,
            plan_age,
            watched: constraints.iter().map(|c| c.watched_vehicle.to_string()).collect(),
            rules: constraints.iter().map(|c| c.rule.to_string()).collect(),
            slacks: sol.slacks.iter().map(|row| row.first().copied().unwrap_or(0.0).to_string()).collect(),
        };
        self.bus.publish(j, now, sol.trajectory.clone())?;
        self.plans[j] = Some(sol);
        Ok(())
    }

    fn record(&mut self, t: f64, errors: &[FormationError]) -> Result<()> {
        let road = &self.sc.road;
        let spec = self.supervisor.active();
        for (j, x) in self.states.iter().enumerate() {
            let u = self.plans[j]
                .as_ref()
                .map(|p| p.trajectory.control_at(t))
                .unwrap_or_default();
            let (px, py) = road.frenet_to_cartesian(x.s, x.r)?;
            let tel = &self.telemetry[j];
            self.trace.push(TraceRecord {
                format_version: TRACE_FORMAT_VERSION,
                time: t,
                vehicle: j,
                s: x.s,
                r: x.r,
                v: x.v,
                theta: x.theta,
                k: x.k,
                a: u.a,
                kappa: u.kappa,
                e_s: errors[j].e_s,
                e_r: errors[j].e_r,
                e: errors[j].e,
                x: px,
                y: py,
                yaw: road.heading(x.s) + x.theta,
                road_left: road.left_bound(x.s).0,
                road_right: road.right_bound(x.s).0,
                formation: spec.name.clone(),
                rank: spec.rank(j),
                solver_status: tel.status.clone(),
                solver_iterations: tel.iterations,
                solver_cost: tel.cost,
                plan_age: tel.plan_age,
                watched: tel.watched.join(";"),
                rules: tel.rules.join(";"),
                slacks: tel.slacks.join(";"),
            });
        }
        Ok(())
    }

    fn check_separation(&mut self, t: f64) -> Result<()> {
        let n = self.states.len();
        let tick = &self.trace[self.trace.len() - n..];
        let fp = self.sc.config.sim.footprint;
        let mut collision = None;
        for pair in &mut self.min_distances {
            let (a, b) = (&tick[pair.a], &tick[pair.b]);
            let d = (a.x - b.x).hypot(a.y - b.y);
            if d < pair.min_distance {
                pair.min_distance = d;
                pair.time = t;
            }
            if collision.is_none() && rectangles_overlap((a.x, a.y, a.yaw), (b.x, b.y, b.yaw), &fp) {
                collision = Some((pair.a, pair.b));
            }
        }
        match collision {
            Some((a, b)) => Err(Error::Collision { a, b, time: t }),
            None => Ok(()),
        }
    }

    /// Integrates each vehicle over one tick, splitting at plan knots so
    /// every piece runs under a single control.
    fn advance(&mut self, t: f64) -> Result<()> {
        let sim = &self.sc.config.sim;
        let end = t + sim.tick;
        for j in 0..self.states.len() {
            let mut x = self.states[j];
            match &self.plans[j] {
                Some(plan) => {
                    let traj = &plan.trajectory;
                    let mut cuts = vec![t];
                    let first = ((t - traj.t0) / traj.dt + 1e-9).floor() as i64 + 1;
                    let mut m = first.max(0) as usize;
                    while m < traj.knots.len() && traj.time_of(m) < end - 1e-9 {
                        cuts.push(traj.time_of(m));
                        m += 1;
                    }
                    cuts.push(end);
                    for w in cuts.windows(2) {
                        let u = traj.control_at(w[0]);
                        x = integrate_span(&x, &u, &self.sc.road, w[1] - w[0], sim.plant_step)?;
                    }
                }
                None => {
                    x = integrate_span(&x, &ControlInput::default(), &self.sc.road, sim.tick, sim.plant_step)?;
                }
            }
            let mut v = x.to_vector();
            for (i, dist) in self.noise.iter().enumerate() {
                if let Some(d) = dist {
                    v[i] += d.sample(&mut self.rng);
                }
            }
            x = VehicleState::from_vector(&v);
            if x.theta.abs() >= std::f64::consts::FRAC_PI_2 {
                return Err(Error::HeadingLimit {
                    vehicle: j,
                    time: end,
                    theta: x.theta,
                });
            }
            self.states[j] = x;
        }
        Ok(())
    }

    fn finish(self, ticks: usize, abort: Option<String>) -> RunOutput {
        let cfg = &self.sc.config;
        let n = self.states.len();
        let formation_errors = (0..n)
            .map(|j| {
                let es: Vec<f64> = self.trace.iter().filter(|r| r.vehicle == j).map(|r| r.e).collect();
                ErrorStats {
                    vehicle: j,
                    max: es.iter().copied().fold(0.0, f64::max),
                    mean: if es.is_empty() { 0.0 } else { es.iter().sum::<f64>() / es.len() as f64 },
                    last: es.last().copied().unwrap_or(0.0),
                }
            })
            .collect();
        let violations = audit_safety(&self.trace, &audit_settings(cfg));
        let summary = Summary {
            format_version: SUMMARY_FORMAT_VERSION,
            scenario: cfg.name.clone(),
            seed: cfg.sim.seed,
            simulated_time: ticks as f64 * cfg.sim.tick,
            ticks,
            vehicles: n,
            completed: abort.is_none(),
            abort_reason: abort,
            formation_errors,
            min_distances: self
                .min_distances
                .into_iter()
                .filter(|p| p.min_distance.is_finite())
                .collect(),
            solver: SolverStats::from_timing(&self.timing),
            switch_events: self.supervisor.events().to_vec(),
            violations,
        };
        RunOutput {
            trace: self.trace,
            timing: self.timing,
            summary,
        }
    }
}
