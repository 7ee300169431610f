//! Sequential quadratic programming on the shooting transcription.
//!
//! Each iteration solves a QP with the Gauss-Newton Hessian of the
//! least-squares cost and linearized rows relaxed by an ℓ1 elastic term,
//! then backtracks on the ℓ1 merit `f + ν Σ max(0, cᵢ)`.

use super::qp::Qp;
use super::transcription::{Evaluation, Transcription};
use super::{OcpInstance, OcpSolution, SolveStatus, WarmStart};
use crate::dynamics::{ControlInput, Trajectory};
use crate::error::Result;
use std::time::Instant;

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1.0 / 1024.0;

struct Candidate {
    z: Vec<f64>,
    cost: f64,
    violation: f64,
}

pub(super) fn solve(inst: &OcpInstance<'_>, warm: Option<&WarmStart>) -> Result<OcpSolution> {
    let started = Instant::now();
    let tr = inst.discretize();
    let settings = &inst.settings;
    let tol = settings.tolerance;
    let (lo, hi) = tr.variable_bounds();

    let mut z = initial_point(inst, &tr, warm)?;
    if !inst.initial_state_issues().is_empty() {
        let ev = tr.evaluate(&z, false)?;
        return finish(inst, &tr, &z, &ev, SolveStatus::InfeasibleHard, 0, started);
    }

    let mut nu: f64 = 10.0;
    let mut best: Option<Candidate> = None;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let mut ev = tr.evaluate(&z, true)?;

    for it in 1..=settings.max_iterations {
        iterations = it;
        remember(&mut best, &z, &ev, tol);

        let (grad, hess) = tr.gradient_and_hessian(&z, &ev);
        let (rows, rhs) = tr.linearize(&ev);
        let zv = nalgebra::DVector::from_column_slice(&z);
        let qp = Qp {
            h: hess.clone(),
            g: grad.clone(),
            rows,
            rhs,
            lo: &lo - &zv,
            hi: &hi - &zv,
            rho: settings.elastic_penalty,
        };
        let sol = qp.solve();
        if !sol.converged {
            log::trace!("vehicle {}: QP stopped after {} iterations", inst.vehicle_id, sol.iterations);
        }
        let d = sol.d;

        let violation = ev.violation();
        let stationarity = (&hess * &d).amax() / grad.amax().max(1.0);
        if violation <= tol && (stationarity <= tol || d.amax() <= 1e-10) {
            iterations = it - 1;
            status = SolveStatus::Converged;
            break;
        }

        let lam_max = sol.lambda.iter().fold(0.0, |a: f64, &b| a.max(b));
        nu = nu.max(1.1 * lam_max);
        let merit = ev.cost + nu * ev.violation_sum();
        let elastic: f64 = sol.elastic.iter().sum();
        let slope = grad.dot(&d) + nu * (elastic - ev.violation_sum());

        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= MIN_STEP {
            let trial = step(&z, &d, alpha, &lo, &hi);
            if let Ok(trial_ev) = tr.evaluate(&trial, false) {
                let trial_merit = trial_ev.cost + nu * trial_ev.violation_sum();
                let wanted = if slope < 0.0 { ARMIJO * alpha * slope } else { 0.0 };
                if trial_merit <= merit + wanted || (slope >= 0.0 && trial_merit < merit) {
                    accepted = Some(trial);
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some(next) = accepted else {
            log::debug!("vehicle {}: line search stalled at iteration {it}", inst.vehicle_id);
            break;
        };
        z = next;
        ev = tr.evaluate(&z, true)?;
    }

    if status != SolveStatus::Converged {
        remember(&mut best, &z, &ev, tol);
        if let Some(b) = best {
            z = b.z;
            ev = tr.evaluate(&z, false)?;
        }
        log::debug!(
            "vehicle {} t={:.3}: no convergence after {iterations} iterations (violation {:.2e})",
            inst.vehicle_id,
            inst.t0,
            ev.violation()
        );
    }
    finish(inst, &tr, &z, &ev, status, iterations, started)
}

/// Prefers feasible iterates, then lower cost; otherwise lower violation.
fn remember(best: &mut Option<Candidate>, z: &[f64], ev: &Evaluation, tol: f64) {
    let cand = Candidate {
        z: z.to_vec(),
        cost: ev.cost,
        violation: ev.violation().max(0.0),
    };
    let better = match best {
        None => true,
        Some(b) => {
            let (cf, bf) = (cand.violation <= tol, b.violation <= tol);
            match (cf, bf) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => cand.cost < b.cost,
                (false, false) => cand.violation < b.violation,
            }
        }
    };
    if better {
        *best = Some(cand);
    }
}

fn step(z: &[f64], d: &nalgebra::DVector<f64>, alpha: f64, lo: &nalgebra::DVector<f64>, hi: &nalgebra::DVector<f64>) -> Vec<f64> {
    z.iter()
        .enumerate()
        .map(|(i, v)| (v + alpha * d[i]).clamp(lo[i], hi[i]))
        .collect()
}

fn initial_point(inst: &OcpInstance<'_>, tr: &Transcription<'_>, warm: Option<&WarmStart>) -> Result<Vec<f64>> {
    let (lo, hi) = tr.variable_bounds();
    let mut z = match warm {
        Some(w) => inst.decision_vector(&w.controls, &w.slacks),
        None => inst.decision_vector(&[], &[]),
    };
    for (i, v) in z.iter_mut().enumerate() {
        *v = v.clamp(lo[i], hi[i]);
    }
    // Slacks start where the soft rows are satisfied.
    let ev = tr.evaluate(&z, false)?;
    for row in &ev.rows {
        if let Some(idx) = row.slack {
            if row.value > 0.0 {
                z[idx] += row.value;
            }
        }
    }
    Ok(z)
}

fn finish(
    inst: &OcpInstance<'_>,
    tr: &Transcription<'_>,
    z: &[f64],
    ev: &Evaluation,
    mut status: SolveStatus,
    iterations: usize,
    started: Instant,
) -> Result<OcpSolution> {
    let n = tr.knots;
    let controls: Vec<ControlInput> = (0..n).map(|k| tr.control(z, k)).collect();
    let trajectory = Trajectory::rollout(inst.vehicle_id, inst.t0, tr.dt, inst.x0, &controls, inst.road)?;
    let slacks = (0..inst.partition.len())
        .map(|c| (1..=n).map(|k| z[tr.slack_index(c, k)]).collect())
        .collect();
    let hard = ev
        .rows
        .iter()
        .filter(|r| !r.kind.is_soft())
        .fold(f64::NEG_INFINITY, |a, r| a.max(r.value));
    if status == SolveStatus::Converged && !hard_bounds_hold(inst, &trajectory, inst.settings.tolerance) {
        log::warn!("vehicle {}: converged plan breaks a hard bound", inst.vehicle_id);
        status = SolveStatus::MaxIter;
    }
    Ok(OcpSolution {
        trajectory,
        cost: ev.cost,
        slacks,
        status,
        iterations,
        solve_time: started.elapsed().as_secs_f64(),
        max_violation: hard,
    })
}

/// Speed, curvature, lateral-acceleration and control limits at knots `1..=N`.
pub(crate) fn hard_bounds_hold(inst: &OcpInstance<'_>, traj: &Trajectory, tol: f64) -> bool {
    let b = &inst.bounds;
    let n = traj.knots.len() - 1;
    traj.knots.iter().enumerate().all(|(k, knot)| {
        let x = &knot.state;
        let u = &knot.control;
        let state_ok = k == 0
            || (x.v >= b.v_min - tol
                && x.v <= b.v_max + tol
                && x.k.abs() <= b.k_max + tol
                && (x.v * x.v * x.k).abs() <= b.a_lat_max + tol);
        let control_ok = k == n || (u.a.abs() <= b.a_max + tol && u.kappa.abs() <= b.kappa_max + tol);
        state_ok && control_ok
    })
}
