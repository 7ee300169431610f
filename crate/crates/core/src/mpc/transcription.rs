//! Single-shooting transcription of the tracking problem.
//!
//! Decision vector: `[a₀, κ₀, …, a_{N−1}, κ_{N−1}, ε_{0,1..N}, ε_{1,1..N}, …]`,
//! one slack per soft constraint per knot `1..=N`.

use super::qp::SparseRow;
use super::{OcpInstance, SmoothProgram};
use crate::dynamics::{rk4, rk4_with_sensitivity, ControlInput, StateVector};
use crate::error::Result;
use crate::obstacle::ObstacleParabola;
use crate::partition::{g, g_gradient};
use nalgebra::{DMatrix, DVector, SVector};
use serde::{Deserialize, Serialize};

/// What a transcribed inequality row constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    SpeedMax,
    SpeedMin,
    CurvatureMax,
    CurvatureMin,
    RoadLeft,
    RoadRight,
    LateralAccelMax,
    LateralAccelMin,
    /// Index into the instance's relevant obstacles.
    Obstacle(usize),
    /// Index into the instance's partition terms.
    Partition(usize),
}

impl ConstraintKind {
    pub fn is_soft(self) -> bool {
        matches!(self, ConstraintKind::Partition(_))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub knot: usize,
    pub kind: ConstraintKind,
    pub value: f64,
    pub grad: SVector<f64, 5>,
    pub slack: Option<usize>,
}

pub(crate) struct Evaluation {
    pub cost: f64,
    pub states: Vec<StateVector>,
    pub rows: Vec<Row>,
    /// `∂x_k/∂u`, 5 × 2N, nonzero only in the first `2k` columns.
    pub sens: Vec<DMatrix<f64>>,
}

impl Evaluation {
    pub fn violation(&self) -> f64 {
        self.rows.iter().fold(0.0, |a: f64, r| a.max(r.value))
    }

    pub fn violation_sum(&self) -> f64 {
        self.rows.iter().map(|r| r.value.max(0.0)).sum()
    }
}

/// Transcribed nonlinear program of one instance.
pub struct Transcription<'a> {
    pub(crate) inst: &'a OcpInstance<'a>,
    pub(crate) knots: usize,
    pub(crate) dt: f64,
    pub(crate) refs: Vec<StateVector>,
    pub(crate) obstacles: Vec<&'a ObstacleParabola>,
    /// Pivot position of each partition term at knots `0..=N`.
    pub(crate) pivots: Vec<Vec<(f64, f64)>>,
}

impl<'a> Transcription<'a> {
    pub(crate) fn new(inst: &'a OcpInstance<'a>) -> Self {
        let knots = inst.settings.knots;
        let dt = inst.settings.horizon / knots as f64;
        let refs = (0..=knots)
            .map(|k| inst.reference.state_at(inst.t0 + k as f64 * dt).to_vector())
            .collect();
        let reach_lo = inst.x0.s - 10.0;
        let reach_hi = inst.x0.s + inst.bounds.v_max.max(inst.x0.v) * inst.settings.horizon + 10.0;
        let obstacles = inst
            .obstacles
            .iter()
            .filter(|o| {
                let (lo, hi) = o.influence();
                hi >= reach_lo && lo <= reach_hi
            })
            .collect();
        let pivots = inst
            .partition
            .iter()
            .map(|term| {
                (0..=knots)
                    .map(|k| {
                        let p = term.pivot.state_at(inst.t0 + k as f64 * dt);
                        (p.s, p.r)
                    })
                    .collect()
            })
            .collect();
        Self {
            inst,
            knots,
            dt,
            refs,
            obstacles,
            pivots,
        }
    }

    pub fn dimension(&self) -> usize {
        self.n_controls() + self.n_slacks()
    }

    pub fn n_controls(&self) -> usize {
        2 * self.knots
    }

    pub fn n_slacks(&self) -> usize {
        self.inst.partition.len() * self.knots
    }

    pub(crate) fn slack_index(&self, term: usize, knot: usize) -> usize {
        self.n_controls() + term * self.knots + (knot - 1)
    }

    /// Obstacles whose influence overlaps the reachable horizon.
    pub fn relevant_obstacles(&self) -> &[&'a ObstacleParabola] {
        &self.obstacles
    }

    pub fn control(&self, z: &[f64], k: usize) -> ControlInput {
        ControlInput::new(z[2 * k], z[2 * k + 1])
    }

    /// Row kinds in evaluation order.
    pub fn constraint_kinds(&self) -> Vec<ConstraintKind> {
        let mut out = Vec::new();
        for _ in 1..=self.knots {
            out.extend(self.knot_kinds());
        }
        out
    }

    fn knot_kinds(&self) -> Vec<ConstraintKind> {
        let mut kinds = vec![
            ConstraintKind::SpeedMax,
            ConstraintKind::SpeedMin,
            ConstraintKind::CurvatureMax,
            ConstraintKind::CurvatureMin,
            ConstraintKind::RoadLeft,
            ConstraintKind::RoadRight,
            ConstraintKind::LateralAccelMax,
            ConstraintKind::LateralAccelMin,
        ];
        kinds.extend((0..self.obstacles.len()).map(ConstraintKind::Obstacle));
        kinds.extend((0..self.inst.partition.len()).map(ConstraintKind::Partition));
        kinds
    }

    pub(crate) fn evaluate(&self, z: &[f64], derivatives: bool) -> Result<Evaluation> {
        let n = self.knots;
        let nc = self.n_controls();
        let road = self.inst.road;
        let w = &self.inst.weights;
        let mut states = Vec::with_capacity(n + 1);
        let mut sens = Vec::new();
        states.push(self.inst.x0.to_vector());
        if derivatives {
            sens.push(DMatrix::zeros(5, nc));
        }
        for k in 0..n {
            let u = self.control(z, k);
            if derivatives {
                let (next, phi, gamma) = rk4_with_sensitivity(&states[k], &u, road, self.dt)?;
                let mut s_next = DMatrix::zeros(5, nc);
                if k > 0 {
                    let prev = sens[k].columns(0, 2 * k);
                    s_next.columns_mut(0, 2 * k).gemm(1.0, &phi, &prev, 0.0);
                }
                s_next.columns_mut(2 * k, 2).copy_from(&gamma);
                sens.push(s_next);
                states.push(next);
            } else {
                states.push(rk4(&states[k], &u, road, self.dt)?);
            }
        }

        let mut cost = 0.0;
        for k in 0..n {
            let e = states[k] - self.refs[k];
            for i in 0..5 {
                cost += self.dt * w.q[i] * e[i] * e[i];
            }
            cost += self.dt * (w.r[0] * z[2 * k] * z[2 * k] + w.r[1] * z[2 * k + 1] * z[2 * k + 1]);
        }
        let e = states[n] - self.refs[n];
        for i in 0..5 {
            cost += w.p[i] * e[i] * e[i];
        }
        for (c, term) in self.inst.partition.iter().enumerate() {
            let slacks = &z[nc + c * n..nc + (c + 1) * n];
            cost += term.constraint.slack_weight * slacks.iter().map(|e| e * e).sum::<f64>();
        }

        let mut rows = Vec::new();
        for k in 1..=n {
            self.knot_rows(k, &states[k], z, &mut rows);
        }
        Ok(Evaluation {
            cost,
            states,
            rows,
            sens,
        })
    }

    fn knot_rows(&self, k: usize, x: &StateVector, z: &[f64], rows: &mut Vec<Row>) {
        let b = &self.inst.bounds;
        let margin = self.inst.settings.road_margin;
        let (s, r, v, kk) = (x[0], x[1], x[2], x[4]);
        let unit = |i: usize, sign: f64| {
            let mut gv = SVector::<f64, 5>::zeros();
            gv[i] = sign;
            gv
        };
        let mut push = |kind, value, grad, slack| {
            rows.push(Row {
                knot: k,
                kind,
                value,
                grad,
                slack,
            })
        };
        push(ConstraintKind::SpeedMax, v - b.v_max, unit(2, 1.0), None);
        push(ConstraintKind::SpeedMin, b.v_min - v, unit(2, -1.0), None);
        push(ConstraintKind::CurvatureMax, kk - b.k_max, unit(4, 1.0), None);
        push(ConstraintKind::CurvatureMin, -b.k_max - kk, unit(4, -1.0), None);
        let (left, dleft) = self.inst.road.left_bound(s);
        let (right, dright) = self.inst.road.right_bound(s);
        push(
            ConstraintKind::RoadLeft,
            r - (left - margin),
            SVector::<f64, 5>::from([-dleft, 1.0, 0.0, 0.0, 0.0]),
            None,
        );
        push(
            ConstraintKind::RoadRight,
            (right + margin) - r,
            SVector::<f64, 5>::from([dright, -1.0, 0.0, 0.0, 0.0]),
            None,
        );
        let lat = v * v * kk;
        let dlat = SVector::<f64, 5>::from([0.0, 0.0, 2.0 * v * kk, 0.0, v * v]);
        push(ConstraintKind::LateralAccelMax, lat - b.a_lat_max, dlat, None);
        push(ConstraintKind::LateralAccelMin, -lat - b.a_lat_max, -dlat, None);
        for (o, obs) in self.obstacles.iter().enumerate() {
            let (h, hs, hr) = obs.h_with_gradient(s, r);
            push(
                ConstraintKind::Obstacle(o),
                h,
                SVector::<f64, 5>::from([hs, hr, 0.0, 0.0, 0.0]),
                None,
            );
        }
        let geom = &self.inst.geometry;
        for (c, term) in self.inst.partition.iter().enumerate() {
            let rule = term.constraint.rule;
            let pivot = self.pivots[c][k];
            let idx = self.slack_index(c, k);
            let (gs, gr) = g_gradient(rule, geom);
            push(
                ConstraintKind::Partition(c),
                g(rule, pivot, geom, (s, r)) - z[idx],
                SVector::<f64, 5>::from([gs, gr, 0.0, 0.0, 0.0]),
                Some(idx),
            );
        }
    }

    /// Cost gradient and Gauss-Newton Hessian.
    pub(crate) fn gradient_and_hessian(&self, z: &[f64], ev: &Evaluation) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.knots;
        let nc = self.n_controls();
        let dim = self.dimension();
        let w = &self.inst.weights;
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for k in 1..=n {
            let (scale, diag) = if k < n { (self.dt, &w.q) } else { (1.0, &w.p) };
            if diag.iter().all(|&q| q == 0.0) {
                continue;
            }
            let cols = 2 * k;
            let sk = ev.sens[k].columns(0, cols);
            let e = ev.states[k] - self.refs[k];
            let mut weighted = DMatrix::zeros(5, cols);
            for i in 0..5 {
                let qi = 2.0 * scale * diag[i];
                if qi == 0.0 {
                    continue;
                }
                for c in 0..cols {
                    weighted[(i, c)] = qi * sk[(i, c)];
                }
                let gi = qi * e[i];
                for c in 0..cols {
                    grad[c] += gi * sk[(i, c)];
                }
            }
            hess.view_mut((0, 0), (cols, cols)).gemm_tr(1.0, &sk, &weighted, 1.0);
        }
        for k in 0..n {
            for j in 0..2 {
                let rj = 2.0 * self.dt * w.r[j];
                grad[2 * k + j] += rj * z[2 * k + j];
                hess[(2 * k + j, 2 * k + j)] += rj;
            }
        }
        for (c, term) in self.inst.partition.iter().enumerate() {
            let weight = 2.0 * term.constraint.slack_weight;
            for i in nc + c * n..nc + (c + 1) * n {
                grad[i] += weight * z[i];
                hess[(i, i)] += weight;
            }
        }
        (grad, hess)
    }

    /// Linearized rows `∇cᵢᵀ d ≤ −cᵢ` in sparse form.
    pub(crate) fn linearize(&self, ev: &Evaluation) -> (Vec<SparseRow>, Vec<f64>) {
        let mut rows = Vec::with_capacity(ev.rows.len());
        let mut rhs = Vec::with_capacity(ev.rows.len());
        for row in &ev.rows {
            let cols = 2 * row.knot;
            let sk = &ev.sens[row.knot];
            let mut lead = vec![0.0; cols];
            for i in 0..5 {
                let gi = row.grad[i];
                if gi == 0.0 {
                    continue;
                }
                for (c, l) in lead.iter_mut().enumerate() {
                    *l += gi * sk[(i, c)];
                }
            }
            rows.push(SparseRow {
                lead,
                extra: row.slack.map(|idx| (idx, -1.0)),
            });
            rhs.push(-row.value);
        }
        (rows, rhs)
    }

    /// Variable bounds as `(lo, hi)` on the decision vector.
    pub(crate) fn variable_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let b = &self.inst.bounds;
        let dim = self.dimension();
        let mut lo = DVector::from_element(dim, 0.0);
        let mut hi = DVector::from_element(dim, f64::INFINITY);
        for k in 0..self.knots {
            lo[2 * k] = -b.a_max;
            hi[2 * k] = b.a_max;
            lo[2 * k + 1] = -b.kappa_max;
            hi[2 * k + 1] = b.kappa_max;
        }
        (lo, hi)
    }
}

impl SmoothProgram for Transcription<'_> {
    fn dimension(&self) -> usize {
        Transcription::dimension(self)
    }

    fn cost(&self, z: &[f64]) -> Result<f64> {
        Ok(self.evaluate(z, false)?.cost)
    }

    fn cost_gradient(&self, z: &[f64]) -> Result<DVector<f64>> {
        let ev = self.evaluate(z, true)?;
        Ok(self.gradient_and_hessian(z, &ev).0)
    }

    fn constraints(&self, z: &[f64]) -> Result<DVector<f64>> {
        let ev = self.evaluate(z, false)?;
        Ok(DVector::from_iterator(ev.rows.len(), ev.rows.iter().map(|r| r.value)))
    }

    fn constraint_jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let ev = self.evaluate(z, true)?;
        let (rows, _) = self.linearize(&ev);
        let mut jac = DMatrix::zeros(rows.len(), self.dimension());
        for (i, row) in rows.iter().enumerate() {
            for (c, v) in row.lead.iter().enumerate() {
                jac[(i, c)] = *v;
            }
            if let Some((c, v)) = row.extra {
                jac[(i, c)] += v;
            }
        }
        Ok(jac)
    }
}
