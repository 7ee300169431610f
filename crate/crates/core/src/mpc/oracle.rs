//! Exhaustive grid search on a three-knot speed-tracking problem, used to
//! validate the optimizer against an independent answer.

use super::{solve, OcpInstance, SolverSettings, Weights};
use crate::dynamics::{BoundSet, Knot, Trajectory, VehicleState};
use crate::error::Result;
use crate::partition::PartitionGeometry;
use crate::road::RoadModel;
use serde::Serialize;

pub const KNOTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedTrackingCase {
    pub v0: f64,
    pub v_ref: f64,
    pub speed_weight: f64,
    pub accel_weight: f64,
    pub dt: f64,
    pub bounds: BoundSet,
}

impl SpeedTrackingCase {
    /// Left-endpoint cost with piecewise-constant accelerations on a straight road.
    pub fn cost(&self, accel: &[f64; KNOTS]) -> f64 {
        let mut v = self.v0;
        let mut total = 0.0;
        for a in accel {
            total += self.dt * (self.speed_weight * (v - self.v_ref).powi(2) + self.accel_weight * a * a);
            v += self.dt * a;
        }
        total
    }

    fn speeds_admissible(&self, accel: &[f64; KNOTS]) -> bool {
        let mut v = self.v0;
        accel.iter().all(|a| {
            v += self.dt * a;
            (self.bounds.v_min..=self.bounds.v_max).contains(&v)
        })
    }

    /// Best cost over `points³` accelerations evenly spaced in `[-a_max, a_max]`.
    pub fn grid_search(&self, points: usize) -> (f64, [f64; KNOTS]) {
        let a_max = self.bounds.a_max;
        let grid: Vec<f64> = (0..points)
            .map(|i| -a_max + 2.0 * a_max * i as f64 / (points - 1) as f64)
            .collect();
        let mut best = (f64::INFINITY, [0.0; KNOTS]);
        for &a0 in &grid {
            for &a1 in &grid {
                for &a2 in &grid {
                    let accel = [a0, a1, a2];
                    if !self.speeds_admissible(&accel) {
                        continue;
                    }
                    let c = self.cost(&accel);
                    if c < best.0 {
                        best = (c, accel);
                    }
                }
            }
        }
        best
    }

    pub fn instance<'a>(&self, road: &'a RoadModel) -> Result<OcpInstance<'a>> {
        let reference = Trajectory::new(
            0,
            0.0,
            self.dt,
            (0..=KNOTS)
                .map(|_| Knot {
                    state: VehicleState::new(0.0, 0.0, self.v_ref, 0.0, 0.0),
                    control: Default::default(),
                })
                .collect(),
        )?;
        Ok(OcpInstance {
            vehicle_id: 0,
            t0: 0.0,
            x0: VehicleState::new(0.0, 0.0, self.v0, 0.0, 0.0),
            reference,
            weights: Weights {
                q: [0.0, 0.0, self.speed_weight, 0.0, 0.0],
                r: [self.accel_weight, Weights::leader().r[1]],
                p: [0.0; 5],
                slack_penalty: 0.0,
            },
            bounds: self.bounds,
            obstacles: vec![],
            partition: vec![],
            geometry: PartitionGeometry::default(),
            road,
            settings: SolverSettings {
                knots: KNOTS,
                horizon: KNOTS as f64 * self.dt,
                ..SolverSettings::default()
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub solver_cost: f64,
    pub grid_cost: f64,
    /// `(solver − grid) / grid`; negative when the solver beats the grid.
    pub relative_gap: f64,
    pub solver_accel: [f64; KNOTS],
    pub grid_accel: [f64; KNOTS],
    pub candidates: usize,
}

pub fn compare(case: &SpeedTrackingCase, points: usize) -> Result<OracleReport> {
    let length = case.bounds.v_max * case.dt * KNOTS as f64 + 50.0;
    let road = RoadModel::straight(length, -5.0, 5.0)?;
    let inst = case.instance(&road)?;
    let sol = solve(&inst, None)?;
    let controls = sol.controls();
    let solver_accel = [controls[0].a, controls[1].a, controls[2].a];
    let (grid_cost, grid_accel) = case.grid_search(points);
    Ok(OracleReport {
        solver_cost: sol.cost,
        grid_cost,
        relative_gap: (sol.cost - grid_cost) / grid_cost.abs().max(f64::MIN_POSITIVE),
        solver_accel,
        grid_accel,
        candidates: points.pow(KNOTS as u32),
    })
}
