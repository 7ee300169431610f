//! Kinematic bicycle model expressed in the road's Frenet frame.

use crate::error::{Error, Result};
use crate::road::RoadModel;
use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

pub type StateVector = SVector<f64, 5>;
pub type StateJacobian = SMatrix<f64, 5, 5>;
pub type InputJacobian = SMatrix<f64, 5, 2>;

/// Vehicle state `[s, r, v, theta, k]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// Curvilinear abscissa [m].
    pub s: f64,
    /// Lateral offset, positive to the left [m].
    pub r: f64,
    /// Speed [m/s].
    pub v: f64,
    /// Heading relative to the centerline tangent [rad].
    pub theta: f64,
    /// Curvature of the vehicle path [1/m].
    pub k: f64,
}

impl VehicleState {
    pub const fn new(s: f64, r: f64, v: f64, theta: f64, k: f64) -> Self {
        Self { s, r, v, theta, k }
    }

    pub fn to_vector(self) -> StateVector {
        StateVector::new(self.s, self.r, self.v, self.theta, self.k)
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self::new(x[0], x[1], x[2], x[3], x[4])
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }
}

/// Control input `[a, kappa]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Longitudinal acceleration [m/s^2].
    pub a: f64,
    /// Curvature rate [1/(m s)].
    pub kappa: f64,
}

impl ControlInput {
    pub const fn new(a: f64, kappa: f64) -> Self {
        Self { a, kappa }
    }
}

/// Box and lateral-acceleration limits of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    pub v_min: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub k_max: f64,
    pub kappa_max: f64,
    pub a_lat_max: f64,
}

impl Default for BoundSet {
    fn default() -> Self {
        Self {
            v_min: 0.0,
            v_max: 10.0,
            a_max: 2.5,
            k_max: 0.2,
            kappa_max: 0.1,
            a_lat_max: 2.5,
        }
    }
}

impl BoundSet {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let maxima = [
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("k_max", self.k_max),
            ("kappa_max", self.kappa_max),
            ("a_lat_max", self.a_lat_max),
        ];
        for (name, value) in maxima {
            if !(value > 0.0 && value.is_finite()) {
                return Err(format!("{name} must be strictly positive, got {value}"));
            }
        }
        if !(self.v_min >= 0.0 && self.v_min < self.v_max) {
            return Err(format!(
                "v_min must satisfy 0 <= v_min < v_max, got {}",
                self.v_min
            ));
        }
        Ok(())
    }
}

/// `1 - r c(s)` with the singularity check.
fn frenet_denominator(s: f64, r: f64, c: f64) -> Result<f64> {
    let denom = 1.0 - r * c;
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::Singular { s, r, denom });
    }
    Ok(denom)
}

/// Time derivative of the state, in state order `[ṡ, ṙ, v̇, θ̇, k̇]`.
pub fn derivative(state: &VehicleState, control: &ControlInput, road: &RoadModel) -> Result<StateVector> {
    f(&state.to_vector(), control, road)
}

fn f(x: &StateVector, u: &ControlInput, road: &RoadModel) -> Result<StateVector> {
    let (s, r, v, theta, k) = (x[0], x[1], x[2], x[3], x[4]);
    let c = road.curvature_extended(s);
    let denom = frenet_denominator(s, r, c)?;
    let (sin_t, cos_t) = theta.sin_cos();
    Ok(StateVector::new(
        v * cos_t / denom,
        v * sin_t,
        u.a,
        v * k - v * cos_t * c / denom,
        u.kappa,
    ))
}

/// Partial derivatives of the dynamics with respect to state and input.
pub fn jacobians(x: &StateVector, road: &RoadModel) -> Result<(StateJacobian, InputJacobian)> {
    let (s, r, v, theta, k) = (x[0], x[1], x[2], x[3], x[4]);
    let (c, dc) = road.curvature_with_slope(s);
    let d = frenet_denominator(s, r, c)?;
    let d2 = d * d;
    let (sin_t, cos_t) = theta.sin_cos();
    let mut a = StateJacobian::zeros();
    // ṡ = v cosθ / d
    a[(0, 0)] = v * cos_t * r * dc / d2;
    a[(0, 1)] = v * cos_t * c / d2;
    a[(0, 2)] = cos_t / d;
    a[(0, 3)] = -v * sin_t / d;
    // ṙ = v sinθ
    a[(1, 2)] = sin_t;
    a[(1, 3)] = v * cos_t;
    // θ̇ = v k - v cosθ c / d
    a[(3, 0)] = -v * cos_t * dc / d2;
    a[(3, 1)] = -v * cos_t * c * c / d2;
    a[(3, 2)] = k - cos_t * c / d;
    a[(3, 3)] = v * sin_t * c / d;
    a[(3, 4)] = v;
    let mut b = InputJacobian::zeros();
    b[(2, 0)] = 1.0;
    b[(4, 1)] = 1.0;
    Ok((a, b))
}

/// Classical RK4 stages per integration step.
pub const RK4_SUBSTEPS: usize = 4;

/// Advances `state` by `h` with the control held constant, using
/// [`RK4_SUBSTEPS`] classical RK4 stages of equal length.
pub fn integrate(state: &VehicleState, control: &ControlInput, road: &RoadModel, h: f64) -> Result<VehicleState> {
    Ok(VehicleState::from_vector(&rk4(&state.to_vector(), control, road, h)?))
}

pub(crate) fn rk4(x: &StateVector, u: &ControlInput, road: &RoadModel, h: f64) -> Result<StateVector> {
    let sub = h / RK4_SUBSTEPS as f64;
    let mut x = *x;
    for _ in 0..RK4_SUBSTEPS {
        x = rk4_stage(&x, u, road, sub)?;
    }
    Ok(x)
}

fn rk4_stage(x: &StateVector, u: &ControlInput, road: &RoadModel, h: f64) -> Result<StateVector> {
    let k1 = f(x, u, road)?;
    let k2 = f(&(x + 0.5 * h * k1), u, road)?;
    let k3 = f(&(x + 0.5 * h * k2), u, road)?;
    let k4 = f(&(x + h * k3), u, road)?;
    Ok(x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// [`integrate`] together with its sensitivities `∂x⁺/∂x` and `∂x⁺/∂u`.
pub(crate) fn rk4_with_sensitivity(
    x: &StateVector,
    u: &ControlInput,
    road: &RoadModel,
    h: f64,
) -> Result<(StateVector, StateJacobian, InputJacobian)> {
    let sub = h / RK4_SUBSTEPS as f64;
    let mut state = *x;
    let mut dx = StateJacobian::identity();
    let mut du = InputJacobian::zeros();
    for _ in 0..RK4_SUBSTEPS {
        let (next, sx, su) = rk4_stage_with_sensitivity(&state, u, road, sub)?;
        state = next;
        dx = sx * dx;
        du = sx * du + su;
    }
    Ok((state, dx, du))
}

fn rk4_stage_with_sensitivity(
    x: &StateVector,
    u: &ControlInput,
    road: &RoadModel,
    h: f64,
) -> Result<(StateVector, StateJacobian, InputJacobian)> {
    let eye = StateJacobian::identity();
    let k1 = f(x, u, road)?;
    let (a1, b) = jacobians(x, road)?;
    let dk1_dx = a1;
    let dk1_du = b;

    let x2 = x + 0.5 * h * k1;
    let k2 = f(&x2, u, road)?;
    let (a2, _) = jacobians(&x2, road)?;
    let dk2_dx = a2 * (eye + 0.5 * h * dk1_dx);
    let dk2_du = a2 * (0.5 * h * dk1_du) + b;

    let x3 = x + 0.5 * h * k2;
    let k3 = f(&x3, u, road)?;
    let (a3, _) = jacobians(&x3, road)?;
    let dk3_dx = a3 * (eye + 0.5 * h * dk2_dx);
    let dk3_du = a3 * (0.5 * h * dk2_du) + b;

    let x4 = x + h * k3;
    let k4 = f(&x4, u, road)?;
    let (a4, _) = jacobians(&x4, road)?;
    let dk4_dx = a4 * (eye + h * dk3_dx);
    let dk4_du = a4 * (h * dk3_du) + b;

    let next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    let dx = eye + h / 6.0 * (dk1_dx + 2.0 * dk2_dx + 2.0 * dk3_dx + dk4_dx);
    let du = h / 6.0 * (dk1_du + 2.0 * dk2_du + 2.0 * dk3_du + dk4_du);
    Ok((next, dx, du))
}

/// Integrates over `duration` with the control held, using at most `max_step`.
pub fn integrate_span(
    state: &VehicleState,
    control: &ControlInput,
    road: &RoadModel,
    duration: f64,
    max_step: f64,
) -> Result<VehicleState> {
    if duration <= 0.0 {
        return Ok(*state);
    }
    let steps = (duration / max_step - 1e-9).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let mut x = state.to_vector();
    for _ in 0..steps {
        x = rk4(&x, control, road, h)?;
    }
    Ok(VehicleState::from_vector(&x))
}

/// One knot of a planned trajectory: state at the knot time and the control
/// applied from that knot until the next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub state: VehicleState,
    pub control: ControlInput,
}

/// Uniformly time-stamped sequence of knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub vehicle_id: usize,
    pub t0: f64,
    pub dt: f64,
    pub knots: Vec<Knot>,
}

impl Trajectory {
    pub fn new(vehicle_id: usize, t0: f64, dt: f64, knots: Vec<Knot>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidTrajectory("no knots".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidTrajectory(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            vehicle_id,
            t0,
            dt,
            knots,
        })
    }

    /// Rolls the dynamics forward from `state` under `controls`; the final
    /// knot repeats the last control.
    pub fn rollout(
        vehicle_id: usize,
        t0: f64,
        dt: f64,
        state: VehicleState,
        controls: &[ControlInput],
        road: &RoadModel,
    ) -> Result<Self> {
        let mut knots = Vec::with_capacity(controls.len() + 1);
        let mut x = state;
        for u in controls {
            knots.push(Knot { state: x, control: *u });
            x = integrate(&x, u, road, dt)?;
        }
        let last = controls.last().copied().unwrap_or_default();
        knots.push(Knot {
            state: x,
            control: last,
        });
        Self::new(vehicle_id, t0, dt, knots)
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.dt * (self.knots.len() - 1) as f64
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.t0 + self.dt * index as f64
    }

    /// Linear interpolation of the state; clamps to the end knots.
    pub fn state_at(&self, t: f64) -> VehicleState {
        let last = self.knots.len() - 1;
        let x = (t - self.t0) / self.dt;
        if x <= 0.0 {
            return self.knots[0].state;
        }
        if x >= last as f64 {
            return self.knots[last].state;
        }
        let i = x.floor() as usize;
        let w = x - i as f64;
        let a = self.knots[i].state.to_vector();
        let b = self.knots[i + 1].state.to_vector();
        VehicleState::from_vector(&(a * (1.0 - w) + b * w))
    }

    /// Control in effect at `t` (piecewise constant, last control held).
    pub fn control_at(&self, t: f64) -> ControlInput {
        let x = ((t - self.t0) / self.dt + 1e-9).floor();
        let i = if x <= 0.0 { 0 } else { (x as usize).min(self.knots.len() - 1) };
        self.knots[i].control
    }

    /// Model prediction at `t`: the last knot at or before `t` integrated
    /// forward under its control. Exact between knots, unlike `state_at`.
    pub fn predict(&self, t: f64, road: &RoadModel, max_step: f64) -> Result<VehicleState> {
        let x = ((t - self.t0) / self.dt + 1e-9).floor();
        let i = if x <= 0.0 { 0 } else { (x as usize).min(self.knots.len() - 1) };
        let knot = &self.knots[i];
        integrate_span(&knot.state, &knot.control, road, t - self.time_of(i), max_step)
    }

    /// Extends the trajectory to `target_end` by integrating with the last
    /// recorded control held constant, at the same knot spacing.
    pub fn extrapolate(&self, target_end: f64, road: &RoadModel) -> Result<Trajectory> {
        let mut out = self.clone();
        let missing = (target_end - self.end_time()) / self.dt;
        if missing <= 1e-9 {
            return Ok(out);
        }
        let extra = (missing - 1e-9).ceil() as usize;
        let hold = self.knots[self.knots.len() - 1].control;
        let mut x = self.knots[self.knots.len() - 1].state;
        for _ in 0..extra {
            x = integrate(&x, &hold, road, self.dt)?;
            out.knots.push(Knot {
                state: x,
                control: hold,
            });
        }
        Ok(out)
    }

    pub fn truncated(&self, len: usize) -> Trajectory {
        let mut out = self.clone();
        out.knots.truncate(len.max(1));
        out
    }

    /// Largest per-component mismatch between each recorded state and the
    /// re-integration of its predecessor.
    pub fn dynamics_defect(&self, road: &RoadModel) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for w in self.knots.windows(2) {
            let next = integrate(&w[0].state, &w[0].control, road, self.dt)?;
            let gap = (next.to_vector() - w[1].state.to_vector()).amax();
            worst = worst.max(gap);
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn straight() -> RoadModel {
        RoadModel::straight(1000.0, -10.0, 10.0).unwrap()
    }

    #[test]
    fn derivative_examples() {
        let road = straight();
        let d = derivative(&VehicleState::new(0.0, 0.0, 6.0, 0.0, 0.0), &ControlInput::default(), &road).unwrap();
        assert_eq!(d, StateVector::new(6.0, 0.0, 0.0, 0.0, 0.0));

        let arc = RoadModel::arc(1000.0, 0.01, -10.0, 20.0).unwrap();
        let d = derivative(&VehicleState::new(0.0, 0.0, 6.0, 0.0, 0.01), &ControlInput::default(), &arc).unwrap();
        assert_abs_diff_eq!(d[0], 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[3], 0.0, epsilon = 1e-15);

        let x = VehicleState::new(0.0, 10.0, 5.0, 0.1, 0.0);
        let d = derivative(&x, &ControlInput::new(1.0, 0.05), &arc).unwrap();
        let denom: f64 = 1.0 - 10.0 * 0.01;
        assert_abs_diff_eq!(d[0], 5.0 * 0.1f64.cos() / denom, epsilon = 1e-14);
        assert_abs_diff_eq!(d[1], 5.0 * 0.1f64.sin(), epsilon = 1e-14);
        assert_abs_diff_eq!(d[2], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[3], -5.0 * 0.1f64.cos() * 0.01 / denom, epsilon = 1e-14);
        assert_abs_diff_eq!(d[4], 0.05, epsilon = 1e-15);
    }

    #[test]
    fn derivative_singularity() {
        let arc = RoadModel::arc(100.0, 0.1, -5.0, 15.0).unwrap();
        let x = VehicleState::new(0.0, 10.0, 5.0, 0.0, 0.0);
        assert!(matches!(
            derivative(&x, &ControlInput::default(), &arc),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn integrate_examples() {
        let road = straight();
        let x = integrate(&VehicleState::new(0.0, 0.0, 6.0, 0.0, 0.0), &ControlInput::default(), &road, 0.25).unwrap();
        assert_abs_diff_eq!(x.s, 1.5, epsilon = 1e-14);
        assert_eq!((x.r, x.v, x.theta, x.k), (0.0, 6.0, 0.0, 0.0));

        // Uniform acceleration: v = a t, s = a t^2 / 2.
        let x = integrate(&VehicleState::default(), &ControlInput::new(2.0, 0.0), &road, 1.0).unwrap();
        assert_abs_diff_eq!(x.v, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x.s, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn step_halving_agrees() {
        let road = RoadModel::new(
            &[(0.0, 0.0), (50.0, 0.015), (120.0, -0.01)],
            &[(0.0, 7.0)],
            &[(0.0, -7.0)],
            300.0,
            crate::road::Pose::default(),
        )
        .unwrap();
        let cases = [
            (VehicleState::new(10.0, 1.0, 6.0, 0.05, 0.01), ControlInput::new(0.5, 0.02)),
            (VehicleState::new(40.0, -2.0, 8.0, -0.1, -0.02), ControlInput::new(-1.0, -0.05)),
            (VehicleState::new(80.0, 3.0, 4.0, 0.02, 0.05), ControlInput::new(2.5, 0.1)),
        ];
        for (x, u) in cases {
            let one = integrate(&x, &u, &road, 0.25).unwrap();
            let half = integrate(&integrate(&x, &u, &road, 0.125).unwrap(), &u, &road, 0.125).unwrap();
            let gap = (one.to_vector() - half.to_vector()).amax();
            assert!(gap <= 1e-6, "gap {gap} case {x:?} diff {:?}", one.to_vector() - half.to_vector());
        }
    }

    #[test]
    fn rk4_sensitivity_matches_finite_differences() {
        let road = RoadModel::new(
            &[(0.0, 0.0), (40.0, 0.02), (80.0, 0.0)],
            &[(0.0, 6.0)],
            &[(0.0, -6.0)],
            200.0,
            crate::road::Pose::default(),
        )
        .unwrap();
        let x = StateVector::new(30.0, 1.5, 5.0, 0.08, 0.03);
        let u = ControlInput::new(0.7, -0.03);
        let (_, dx, du) = rk4_with_sensitivity(&x, &u, &road, 0.25).unwrap();
        let h = 1e-6;
        for j in 0..5 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fd = (rk4(&xp, &u, &road, 0.25).unwrap() - rk4(&xm, &u, &road, 0.25).unwrap()) / (2.0 * h);
            for i in 0..5 {
                assert_abs_diff_eq!(dx[(i, j)], fd[i], epsilon = 1e-7);
            }
        }
        let fd_a = (rk4(&x, &ControlInput::new(u.a + h, u.kappa), &road, 0.25).unwrap()
            - rk4(&x, &ControlInput::new(u.a - h, u.kappa), &road, 0.25).unwrap())
            / (2.0 * h);
        let fd_k = (rk4(&x, &ControlInput::new(u.a, u.kappa + h), &road, 0.25).unwrap()
            - rk4(&x, &ControlInput::new(u.a, u.kappa - h), &road, 0.25).unwrap())
            / (2.0 * h);
        for i in 0..5 {
            assert_abs_diff_eq!(du[(i, 0)], fd_a[i], epsilon = 1e-7);
            assert_abs_diff_eq!(du[(i, 1)], fd_k[i], epsilon = 1e-7);
        }
    }

    fn cruising(v: f64, a: f64) -> Trajectory {
        Trajectory::rollout(
            0,
            0.0,
            0.25,
            VehicleState::new(0.0, 0.0, v, 0.0, 0.0),
            &vec![ControlInput::new(a, 0.0); 4],
            &straight(),
        )
        .unwrap()
    }

    #[test]
    fn extrapolate_examples() {
        let road = straight();
        let traj = cruising(6.0, 0.0);
        assert_eq!(traj.extrapolate(traj.end_time(), &road).unwrap(), traj);

        let ext = traj.extrapolate(traj.end_time() + 0.256, &road).unwrap();
        assert_eq!(ext.knots.len(), traj.knots.len() + 2);
        assert_eq!(&ext.knots[..traj.knots.len()], &traj.knots[..]);
        for w in ext.knots.windows(2) {
            assert_abs_diff_eq!(w[1].state.s - w[0].state.s, 6.0 * 0.25, epsilon = 1e-12);
        }

        let acc = cruising(2.0, 1.0);
        let ext = acc.extrapolate(acc.end_time() + 1.0, &road).unwrap();
        for (i, knot) in ext.knots.iter().enumerate() {
            assert_abs_diff_eq!(knot.state.v, 2.0 + 0.25 * i as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn rollout_is_consistent() {
        let road = straight();
        let traj = Trajectory::rollout(
            1,
            0.0,
            0.25,
            VehicleState::new(0.0, 0.5, 5.0, 0.02, 0.0),
            &[ControlInput::new(0.3, 0.01), ControlInput::new(-0.2, -0.02)],
            &road,
        )
        .unwrap();
        assert!(traj.dynamics_defect(&road).unwrap() <= 1e-12);
    }

    fn curvy_road() -> RoadModel {
        RoadModel::new(
            &[(0.0, 0.0), (50.0, 0.015), (120.0, -0.01)],
            &[(0.0, 7.0)],
            &[(0.0, -7.0)],
            300.0,
            crate::road::Pose::default(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn step_halving_over_bound_set(
            s in 0.0f64..250.0, r in -5.0f64..5.0, v in 0.0f64..10.0, theta in -0.3f64..0.3, k in -0.2f64..0.2,
            a in -2.5f64..2.5, kappa in -0.1f64..0.1,
        ) {
            let road = curvy_road();
            let (x, u) = (VehicleState::new(s, r, v, theta, k), ControlInput::new(a, kappa));
            let one = integrate(&x, &u, &road, 0.25).unwrap();
            let half = integrate(&integrate(&x, &u, &road, 0.125).unwrap(), &u, &road, 0.125).unwrap();
            prop_assert!((one.to_vector() - half.to_vector()).amax() <= 1e-6);
        }

        #[test]
        fn centerline_equilibrium(c in -0.05f64..0.05, v in 0.0f64..10.0) {
            let road = RoadModel::arc(500.0, c, -5.0, 5.0).unwrap();
            let d = derivative(&VehicleState::new(20.0, 0.0, v, 0.0, c), &ControlInput::default(), &road).unwrap();
            prop_assert!(d[1].abs() < 1e-14);
            prop_assert!(d[3].abs() < 1e-14);
        }

        #[test]
        fn nonnegative_speed_is_preserved(v0 in 0.0f64..10.0, a in 0.0f64..2.5, h in 0.01f64..1.0) {
            let x = integrate(&VehicleState::new(0.0, 0.0, v0, 0.0, 0.0), &ControlInput::new(a, 0.0), &straight(), h).unwrap();
            prop_assert!(x.v >= 0.0);
        }

        #[test]
        fn derivative_is_linear_in_controls(
            a1 in -2.5f64..2.5, a2 in -2.5f64..2.5, k1 in -0.1f64..0.1, k2 in -0.1f64..0.1,
        ) {
            let road = RoadModel::arc(500.0, 0.01, -5.0, 5.0).unwrap();
            let x = VehicleState::new(10.0, 1.0, 5.0, 0.05, 0.02);
            let zero = derivative(&x, &ControlInput::default(), &road).unwrap();
            let d1 = derivative(&x, &ControlInput::new(a1, k1), &road).unwrap();
            let d2 = derivative(&x, &ControlInput::new(a2, k2), &road).unwrap();
            let d12 = derivative(&x, &ControlInput::new(a1 + a2, k1 + k2), &road).unwrap();
            let sup = d1 + d2 - zero;
            prop_assert!((d12 - sup).amax() < 1e-12);
        }

        #[test]
        fn extrapolate_then_truncate_is_identity(v in 0.0f64..10.0, extra in 0.0f64..3.0) {
            let road = straight();
            let traj = cruising(v, 0.0);
            let ext = traj.extrapolate(traj.end_time() + extra, &road).unwrap();
            prop_assert_eq!(ext.truncated(traj.knots.len()), traj);
        }
    }
}
