//! Receding-horizon trajectory optimizer for one vehicle.

pub mod oracle;
mod qp;
mod sqp;
mod transcription;

pub use transcription::{ConstraintKind, Transcription};

use crate::dynamics::{BoundSet, ControlInput, Trajectory, VehicleState};
use crate::error::Result;
use crate::obstacle::ObstacleParabola;
use crate::partition::{PartitionConstraint, PartitionGeometry};
use crate::road::RoadModel;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Diagonal tracking weights and the slack penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    /// State weights in `[s, r, v, θ, k]` order.
    pub q: [f64; 5],
    /// Control weights in `[a, κ]` order.
    pub r: [f64; 2],
    /// Terminal state weights.
    #[serde(default)]
    pub p: [f64; 5],
    /// Weight `K` given to partition constraints built for this vehicle.
    pub slack_penalty: f64,
}

impl Weights {
    pub const fn leader() -> Self {
        Self {
            q: [0.0, 4.0, 2.0, 20.0, 20.0],
            r: [1.0, 200.0],
            p: [0.0; 5],
            slack_penalty: 1e4,
        }
    }

    pub const fn follower() -> Self {
        Self {
            q: [1.0, 2.0, 0.0, 20.0, 20.0],
            r: [1.0, 200.0],
            p: [0.0; 5],
            slack_penalty: 1e4,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let finite = |v: f64| v.is_finite();
        if !self.q.iter().chain(&self.p).all(|&v| finite(v) && v >= 0.0) {
            return Err("state and terminal weights must be finite and non-negative".into());
        }
        if !self.r.iter().all(|&v| finite(v) && v > 0.0) {
            return Err("control weights must be strictly positive".into());
        }
        if !(finite(self.slack_penalty) && self.slack_penalty >= 0.0) {
            return Err("slack penalty must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub knots: usize,
    pub horizon: f64,
    pub max_iterations: usize,
    /// Stationarity and feasibility tolerance.
    pub tolerance: f64,
    /// Distance kept from the road edges at the knots, m. Covers the sag of
    /// the path between knots where the edge bends.
    pub road_margin: f64,
    /// ℓ1 penalty on linearized-constraint violation inside each QP.
    pub elastic_penalty: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            knots: 20,
            horizon: 5.0,
            max_iterations: 50,
            tolerance: 1e-4,
            road_margin: 0.15,
            elastic_penalty: 1e5,
        }
    }
}

impl SolverSettings {
    pub fn dt(&self) -> f64 {
        self.horizon / self.knots as f64
    }
}

/// Soft partition constraint with the watched vehicle's predicted motion.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTerm {
    pub constraint: PartitionConstraint,
    /// Covers the horizon; sampled at the knot times by linear interpolation.
    pub pivot: Trajectory,
}

#[derive(Debug, Clone)]
pub struct OcpInstance<'a> {
    pub vehicle_id: usize,
    pub t0: f64,
    pub x0: VehicleState,
    /// Sampled on the knot grid; `state_at` is used for lookups.
    pub reference: Trajectory,
    pub weights: Weights,
    pub bounds: BoundSet,
    pub obstacles: Vec<ObstacleParabola>,
    pub partition: Vec<PartitionTerm>,
    pub geometry: PartitionGeometry,
    pub road: &'a RoadModel,
    pub settings: SolverSettings,
}

impl<'a> OcpInstance<'a> {
    pub fn discretize(&'a self) -> Transcription<'a> {
        Transcription::new(self)
    }

    /// Decision vector from controls and per-term slacks (missing entries are zero).
    pub fn decision_vector(&self, controls: &[ControlInput], slacks: &[Vec<f64>]) -> Vec<f64> {
        let n = self.settings.knots;
        let mut z = vec![0.0; 2 * n + self.partition.len() * n];
        for (k, u) in controls.iter().take(n).enumerate() {
            z[2 * k] = u.a;
            z[2 * k + 1] = u.kappa;
        }
        for (c, row) in slacks.iter().take(self.partition.len()).enumerate() {
            for (k, e) in row.iter().take(n).enumerate() {
                z[2 * n + c * n + k] = *e;
            }
        }
        z
    }

    /// Hard-bound problems with the initial state, if any.
    pub fn initial_state_issues(&self) -> Vec<String> {
        let x = &self.x0;
        let b = &self.bounds;
        let mut out = Vec::new();
        if !x.is_finite() {
            out.push("non-finite initial state".to_string());
            return out;
        }
        if x.v < b.v_min - 1e-3 || x.v > b.v_max + 1e-3 {
            out.push(format!("speed {} outside [{}, {}]", x.v, b.v_min, b.v_max));
        }
        if x.k.abs() > b.k_max + 1e-3 {
            out.push(format!("curvature {} exceeds {}", x.k, b.k_max));
        }
        if (x.v * x.v * x.k).abs() > b.a_lat_max + 0.1 {
            out.push(format!("lateral acceleration {} exceeds {}", x.v * x.v * x.k, b.a_lat_max));
        }
        let (left, right) = (self.road.left_bound(x.s).0, self.road.right_bound(x.s).0);
        if x.r > left + 0.1 || x.r < right - 0.1 {
            out.push(format!("lateral offset {} outside the road [{right}, {left}]", x.r));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    InfeasibleHard,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max-iter",
            SolveStatus::InfeasibleHard => "infeasible-hard",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    pub trajectory: Trajectory,
    pub cost: f64,
    /// Per partition term, slacks at knots `1..=N`.
    pub slacks: Vec<Vec<f64>>,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Wall-clock seconds; excluded from equality of plans.
    pub solve_time: f64,
    /// Largest hard-constraint value at the knots (≤ 0 when satisfied).
    pub max_violation: f64,
}

impl OcpSolution {
    pub fn controls(&self) -> Vec<ControlInput> {
        let n = self.trajectory.knots.len() - 1;
        self.trajectory.knots[..n].iter().map(|k| k.control).collect()
    }

    /// Shifts the plan by `knots` with the last control repeated.
    pub fn shifted(&self, knots: usize) -> WarmStart {
        let shift_row = |row: &[f64]| -> Vec<f64> {
            let mut out: Vec<f64> = row.iter().skip(knots).copied().collect();
            let last = row.last().copied().unwrap_or(0.0);
            out.resize(row.len(), last);
            out
        };
        let controls = self.controls();
        let mut shifted: Vec<ControlInput> = controls.iter().skip(knots).copied().collect();
        let last = controls.last().copied().unwrap_or_default();
        shifted.resize(controls.len(), last);
        WarmStart {
            controls: shifted,
            slacks: self.slacks.iter().map(|r| shift_row(r)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WarmStart {
    pub controls: Vec<ControlInput>,
    pub slacks: Vec<Vec<f64>>,
}

/// Solves one instance. See the `sqp` module for the method.
pub fn solve(instance: &OcpInstance<'_>, warm_start: Option<&WarmStart>) -> Result<OcpSolution> {
    sqp::solve(instance, warm_start)
}

/// A smooth program exposing analytic first derivatives.
pub trait SmoothProgram {
    fn dimension(&self) -> usize;
    fn cost(&self, z: &[f64]) -> Result<f64>;
    fn cost_gradient(&self, z: &[f64]) -> Result<DVector<f64>>;
    fn constraints(&self, z: &[f64]) -> Result<DVector<f64>>;
    fn constraint_jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>>;
}

/// Largest relative mismatch between analytic derivatives and central
/// finite differences, over the cost gradient and every constraint row.
pub fn gradient_check<P: SmoothProgram + ?Sized>(program: &P, point: &[f64]) -> Result<f64> {
    let grad = program.cost_gradient(point)?;
    let jac = program.constraint_jacobian(point)?;
    let mut worst: f64 = 0.0;
    let rel = |a: f64, b: f64| (a - b).abs() / 1f64.max(a.abs()).max(b.abs());
    let mut z = point.to_vec();
    for j in 0..program.dimension() {
        let h = 1e-6 * 1f64.max(point[j].abs());
        z[j] = point[j] + h;
        let (fp, cp) = (program.cost(&z)?, program.constraints(&z)?);
        z[j] = point[j] - h;
        let (fm, cm) = (program.cost(&z)?, program.constraints(&z)?);
        z[j] = point[j];
        worst = worst.max(rel(grad[j], (fp - fm) / (2.0 * h)));
        for i in 0..cp.len() {
            worst = worst.max(rel(jac[(i, j)], (cp[i] - cm[i]) / (2.0 * h)));
        }
    }
    Ok(worst)
}
