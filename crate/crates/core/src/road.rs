//! Road representation in the Frenet frame.
//!
//! The centerline is described by its signed curvature `c(s)` over the
//! curvilinear abscissa `s`, sampled at knots and interpolated with a
//! monotone (Fritsch-Carlson) cubic. Lateral bounds are piecewise linear.
//! A Cartesian embedding of the centerline is precomputed on a regular grid
//! so that Frenet points can be mapped to the plane and back.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Spacing of the precomputed centerline grid [m].
const CENTERLINE_STEP: f64 = 0.5;

/// Monotone piecewise-cubic interpolant of sampled `(s, value)` knots.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidRoad("curvature profile has no knots".into()));
        }
        check_knots(knots, "curvature")?;
        let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let ys: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let n = xs.len();
        let mut slopes = vec![0.0; n];
        if n >= 2 {
            let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
            let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
            slopes[0] = delta[0];
            slopes[n - 1] = delta[n - 2];
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] <= 0.0 {
                    slopes[i] = 0.0;
                } else {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    slopes[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            // Endpoint slopes of a two-sided profile must not overshoot either.
            if n >= 3 {
                if delta[0] * delta[1] <= 0.0 {
                    slopes[0] = 0.0;
                }
                if delta[n - 2] * delta[n - 3] <= 0.0 {
                    slopes[n - 1] = 0.0;
                }
            }
        }
        Ok(Self { xs, ys, slopes })
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            i => (i - 1).min(self.xs.len().saturating_sub(2)),
        }
    }

    /// Value and first derivative; constant extension outside the knot range.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let n = self.xs.len();
        if n == 1 {
            return (self.ys[0], 0.0);
        }
        if x <= self.xs[0] {
            return (self.ys[0], 0.0);
        }
        if x >= self.xs[n - 1] {
            return (self.ys[n - 1], 0.0);
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let value = h00 * self.ys[i]
            + h10 * h * self.slopes[i]
            + h01 * self.ys[i + 1]
            + h11 * h * self.slopes[i + 1];
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -6.0 * t2 + 6.0 * t;
        let d11 = 3.0 * t2 - 2.0 * t;
        let deriv = (d00 * self.ys[i] + d01 * self.ys[i + 1]) / h
            + d10 * self.slopes[i]
            + d11 * self.slopes[i + 1];
        (value, deriv)
    }

    pub fn knots(&self) -> Vec<(f64, f64)> {
        self.xs.iter().copied().zip(self.ys.iter().copied()).collect()
    }
}

/// Piecewise-linear function of `s`, constant beyond its end knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: &[(f64, f64)], what: &str) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidRoad(format!("{what} has no knots")));
        }
        check_knots(knots, what)?;
        Ok(Self {
            xs: knots.iter().map(|k| k.0).collect(),
            ys: knots.iter().map(|k| k.1).collect(),
        })
    }

    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let n = self.xs.len();
        if n == 1 || x <= self.xs[0] {
            return (self.ys[0], 0.0);
        }
        if x >= self.xs[n - 1] {
            return (self.ys[n - 1], 0.0);
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        let slope = (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i]);
        (self.ys[i] + slope * (x - self.xs[i]), slope)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    pub fn knots(&self) -> Vec<(f64, f64)> {
        self.xs.iter().copied().zip(self.ys.iter().copied()).collect()
    }

    fn breakpoints(&self) -> &[f64] {
        &self.xs
    }
}

fn check_knots(knots: &[(f64, f64)], what: &str) -> Result<()> {
    if knots.iter().any(|(s, v)| !s.is_finite() || !v.is_finite()) {
        return Err(Error::InvalidRoad(format!("{what} knots must be finite")));
    }
    if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidRoad(format!(
            "{what} knot abscissae must be strictly increasing"
        )));
    }
    Ok(())
}

/// Cartesian pose of the centerline at `s = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Resolution of the drivable-band sampling used by [`RoadModel::check_validity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityGrid {
    pub ds: f64,
    pub dr: f64,
}

impl Default for ValidityGrid {
    fn default() -> Self {
        Self { ds: 0.5, dr: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct CenterlineNode {
    x: f64,
    y: f64,
    heading: f64,
}

/// Immutable road: curvature profile, lateral bounds and Cartesian embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadModel {
    curvature: MonotoneCubic,
    left: PiecewiseLinear,
    right: PiecewiseLinear,
    s_max: f64,
    origin: Pose,
    nodes: Vec<CenterlineNode>,
}

impl RoadModel {
    /// Builds a road over `[0, s_max]`.
    ///
    /// Fails when knots are malformed or when the right bound is not strictly
    /// below the left bound somewhere in range.
    pub fn new(
        curvature: &[(f64, f64)],
        left: &[(f64, f64)],
        right: &[(f64, f64)],
        s_max: f64,
        origin: Pose,
    ) -> Result<Self> {
        if !(s_max > 0.0 && s_max.is_finite()) {
            return Err(Error::InvalidRoad(format!("s_max must be positive, got {s_max}")));
        }
        let curvature = MonotoneCubic::new(curvature)?;
        let left = PiecewiseLinear::new(left, "left bound")?;
        let right = PiecewiseLinear::new(right, "right bound")?;
        // The gap between two piecewise-linear functions is piecewise linear
        // with breakpoints in the union of their knots.
        let mut probes: Vec<f64> = left
            .breakpoints()
            .iter()
            .chain(right.breakpoints())
            .copied()
            .filter(|s| (0.0..=s_max).contains(s))
            .collect();
        probes.push(0.0);
        probes.push(s_max);
        for s in probes {
            if right.eval(s) >= left.eval(s) {
                return Err(Error::InvalidRoad(format!(
                    "right bound {} not below left bound {} at s={s}",
                    right.eval(s),
                    left.eval(s)
                )));
            }
        }
        let mut road = Self {
            curvature,
            left,
            right,
            s_max,
            origin,
            nodes: Vec::new(),
        };
        road.nodes = road.integrate_centerline();
        Ok(road)
    }

    /// Straight road along the heading of `origin` with constant bounds.
    pub fn straight(length: f64, right: f64, left: f64) -> Result<Self> {
        Self::new(
            &[(0.0, 0.0)],
            &[(0.0, left)],
            &[(0.0, right)],
            length,
            Pose::default(),
        )
    }

    /// Constant-curvature road with constant bounds.
    pub fn arc(length: f64, curvature: f64, right: f64, left: f64) -> Result<Self> {
        Self::new(
            &[(0.0, curvature)],
            &[(0.0, left)],
            &[(0.0, right)],
            length,
            Pose::default(),
        )
    }

    fn integrate_centerline(&self) -> Vec<CenterlineNode> {
        let n = (self.s_max / CENTERLINE_STEP).ceil() as usize;
        let mut nodes = Vec::with_capacity(n + 1);
        let mut node = CenterlineNode {
            x: self.origin.x,
            y: self.origin.y,
            heading: self.origin.heading,
        };
        nodes.push(node);
        for i in 0..n {
            node = self.advance(node, i as f64 * CENTERLINE_STEP, CENTERLINE_STEP);
            nodes.push(node);
        }
        nodes
    }

    /// One RK4 step of `(x, y, heading)' = (cos h, sin h, c(s))`.
    fn advance(&self, node: CenterlineNode, s: f64, h: f64) -> CenterlineNode {
        let c0 = self.curvature_extended(s);
        let c1 = self.curvature_extended(s + 0.5 * h);
        let c2 = self.curvature_extended(s + h);
        let h1 = node.heading + 0.5 * h * c0;
        let h2 = node.heading + 0.5 * h * c1;
        let h3 = node.heading + h * c1;
        let heading = node.heading + h / 6.0 * (c0 + 4.0 * c1 + c2);
        let x = node.x
            + h / 6.0 * (node.heading.cos() + 2.0 * h1.cos() + 2.0 * h2.cos() + h3.cos());
        let y = node.y
            + h / 6.0 * (node.heading.sin() + 2.0 * h1.sin() + 2.0 * h2.sin() + h3.sin());
        CenterlineNode { x, y, heading }
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn origin(&self) -> Pose {
        self.origin
    }

    pub fn curvature_knots(&self) -> Vec<(f64, f64)> {
        self.curvature.knots()
    }

    pub fn left_knots(&self) -> Vec<(f64, f64)> {
        self.left.knots()
    }

    pub fn right_knots(&self) -> Vec<(f64, f64)> {
        self.right.knots()
    }

    /// Centerline curvature `c(s)`; fails outside `[0, s_max]`.
    pub fn curvature_at(&self, s: f64) -> Result<f64> {
        self.check_range(s)?;
        Ok(self.curvature.eval_with_derivative(s).0)
    }

    /// Curvature and its derivative with constant extension past the ends.
    ///
    /// Used by the dynamics, where planned horizons may run slightly past
    /// the mapped range.
    pub fn curvature_with_slope(&self, s: f64) -> (f64, f64) {
        let s_clamped = s.clamp(0.0, self.s_max);
        let (c, dc) = self.curvature.eval_with_derivative(s_clamped);
        if s == s_clamped {
            (c, dc)
        } else {
            (c, 0.0)
        }
    }

    pub fn curvature_extended(&self, s: f64) -> f64 {
        self.curvature_with_slope(s).0
    }

    /// Left bound `r̄(s)` and its slope.
    pub fn left_bound(&self, s: f64) -> (f64, f64) {
        self.left.eval_with_derivative(s)
    }

    /// Right bound `r̲(s)` and its slope.
    pub fn right_bound(&self, s: f64) -> (f64, f64) {
        self.right.eval_with_derivative(s)
    }

    fn check_range(&self, s: f64) -> Result<()> {
        if !(0.0..=self.s_max).contains(&s) {
            return Err(Error::OutOfRange {
                s,
                s_max: self.s_max,
            });
        }
        Ok(())
    }

    /// Samples the drivable band and returns every `(s, r)` with `1 - r c(s) <= 0`.
    pub fn check_validity(&self, grid: ValidityGrid) -> Vec<(f64, f64)> {
        let mut bad = Vec::new();
        let ns = (self.s_max / grid.ds).ceil() as usize;
        for i in 0..=ns {
            let s = (i as f64 * grid.ds).min(self.s_max);
            let c = self.curvature.eval_with_derivative(s).0;
            let lo = self.right.eval(s);
            let hi = self.left.eval(s);
            let nr = ((hi - lo) / grid.dr).ceil() as usize;
            for j in 0..=nr {
                let r = (lo + j as f64 * grid.dr).min(hi);
                if 1.0 - r * c <= 0.0 {
                    bad.push((s, r));
                }
            }
        }
        bad
    }

    /// Centerline point and heading at `s` (constant-heading extension
    /// outside the mapped range).
    pub fn centerline(&self, s: f64) -> (f64, f64, f64) {
        let last = self.nodes.len() - 1;
        let idx = ((s / CENTERLINE_STEP).floor().max(0.0) as usize).min(last);
        let base = idx as f64 * CENTERLINE_STEP;
        let node = self.nodes[idx];
        let h = s - base;
        if h == 0.0 {
            return (node.x, node.y, node.heading);
        }
        let out = self.advance(node, base, h);
        (out.x, out.y, out.heading)
    }

    /// Heading of the centerline tangent at `s`.
    pub fn heading(&self, s: f64) -> f64 {
        self.centerline(s).2
    }

    /// Maps `(s, r)` to the plane: offset `r` along the left normal.
    pub fn frenet_to_cartesian(&self, s: f64, r: f64) -> Result<(f64, f64)> {
        self.check_range(s)?;
        let c = self.curvature.eval_with_derivative(s).0;
        let denom = 1.0 - r * c;
        if denom <= 0.0 {
            return Err(Error::Singular { s, r, denom });
        }
        let (x, y, h) = self.centerline(s);
        Ok((x - r * h.sin(), y + r * h.cos()))
    }

    /// Nearest-point projection of a Cartesian point onto the centerline.
    pub fn cartesian_to_frenet(&self, x: f64, y: f64) -> (f64, f64) {
        let (mut best_i, mut best_d) = (0usize, f64::INFINITY);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n.x - x).powi(2) + (n.y - y).powi(2);
            if d < best_d {
                best_d = d;
                best_i = i;
            }
        }
        let mut s = (best_i as f64 * CENTERLINE_STEP).min(self.s_max);
        for _ in 0..50 {
            let (cx, cy, h) = self.centerline(s);
            let (tx, ty) = (h.cos(), h.sin());
            let (nx, ny) = (-ty, tx);
            let (dx, dy) = (x - cx, y - cy);
            let along = dx * tx + dy * ty;
            let lateral = dx * nx + dy * ny;
            let c = self.curvature_extended(s);
            let step = along / (1.0 - c * lateral);
            let next = (s + step).clamp(0.0, self.s_max);
            let done = (next - s).abs() < 1e-13;
            s = next;
            if done {
                break;
            }
        }
        let (cx, cy, h) = self.centerline(s);
        let r = -(x - cx) * h.sin() + (y - cy) * h.cos();
        (s, r)
    }
}
