//! Static obstacles approximated by parabolas through a bounding triangle.
//!
//! Each obstacle is attached to the road side it is closest to, which fixes
//! the side on which vehicles pass it. The avoidance function `h` is
//! non-positive exactly when the vehicle is on the road-center side of the
//! parabola.

use crate::dynamics::VehicleState;
use crate::error::{Error, Result};
use crate::road::RoadModel;
use serde::{Deserialize, Serialize};

/// Longitudinal margin around the triangle over which `h` is active [m].
pub const ACTIVATION_MARGIN: f64 = 5.0;
/// Length of the blend from the active value to the inactive constant [m].
pub const RAMP_LENGTH: f64 = 5.0;
/// Value of `h` far from the obstacle.
pub const INACTIVE_VALUE: f64 = -1.0;

/// A point in Frenet coordinates.
pub type FrenetPoint = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Coefficients of `r = alpha s^2 + beta s + gamma` through three points.
pub fn fit_parabola(p1: FrenetPoint, p2: FrenetPoint, p3: FrenetPoint) -> Result<(f64, f64, f64)> {
    let pts = [p1, p2, p3];
    for i in 0..3 {
        for j in i + 1..3 {
            if (pts[i].0 - pts[j].0).abs() < 1e-6 {
                return Err(Error::DegenerateTriangle(pts[i].0, pts[j].0));
            }
        }
    }
    let ((s1, r1), (s2, r2), (s3, r3)) = (p1, p2, p3);
    let d12 = (r2 - r1) / (s2 - s1);
    let d13 = (r3 - r1) / (s3 - s1);
    let alpha = (d13 - d12) / (s3 - s2);
    let beta = d12 - alpha * (s1 + s2);
    let gamma = r1 - alpha * s1 * s1 - beta * s1;
    Ok((alpha, beta, gamma))
}

/// Side whose bound is laterally closer to the triangle centroid; ties go right.
pub fn assign_side(triangle: &[FrenetPoint; 3], road: &RoadModel) -> Side {
    let sc = triangle.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let rc = triangle.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let to_left = road.left_bound(sc).0 - rc;
    let to_right = rc - road.right_bound(sc).0;
    if to_right <= to_left {
        Side::Right
    } else {
        Side::Left
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleParabola {
    pub coeffs: (f64, f64, f64),
    pub side: Side,
    /// Abscissa range of the source triangle.
    pub s_span: (f64, f64),
    pub source_triangle: [FrenetPoint; 3],
}

impl ObstacleParabola {
    /// Fits the parabola of `triangle`, attaching it to `side` or, when
    /// absent, to the closest road side.
    pub fn from_triangle(triangle: [FrenetPoint; 3], side: Option<Side>, road: &RoadModel) -> Result<Self> {
        for &(s, r) in &triangle {
            if !(0.0..=road.s_max()).contains(&s) {
                return Err(Error::InvalidObstacle(format!("vertex ({s}, {r}) outside the road range")));
            }
            let (lo, hi) = (road.right_bound(s).0, road.left_bound(s).0);
            if r < lo - 1e-9 || r > hi + 1e-9 {
                return Err(Error::InvalidObstacle(format!(
                    "vertex ({s}, {r}) outside the road band [{lo}, {hi}]"
                )));
            }
        }
        let side = side.unwrap_or_else(|| assign_side(&triangle, road));
        Self::new(triangle, side)
    }

    /// Road-independent constructor (no band check).
    pub fn new(triangle: [FrenetPoint; 3], side: Side) -> Result<Self> {
        let coeffs = fit_parabola(triangle[0], triangle[1], triangle[2])?;
        let alpha = coeffs.0;
        let consistent = match side {
            Side::Right => alpha <= 0.0,
            Side::Left => alpha >= 0.0,
        };
        if !consistent {
            return Err(Error::InvalidObstacle(format!(
                "parabola with alpha={alpha} opens away from the {side:?} side"
            )));
        }
        let lo = triangle.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = triangle.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            coeffs,
            side,
            s_span: (lo, hi),
            source_triangle: triangle,
        })
    }

    /// Boundary `q(s)` and its slope.
    pub fn boundary(&self, s: f64) -> (f64, f64) {
        let (a, b, c) = self.coeffs;
        (a * s * s + b * s + c, 2.0 * a * s + b)
    }

    /// Abscissa interval outside which `h` equals [`INACTIVE_VALUE`].
    pub fn influence(&self) -> (f64, f64) {
        (
            self.s_span.0 - ACTIVATION_MARGIN - RAMP_LENGTH,
            self.s_span.1 + ACTIVATION_MARGIN + RAMP_LENGTH,
        )
    }

    /// Avoidance value and its gradient `(∂h/∂s, ∂h/∂r)`.
    pub fn h_with_gradient(&self, s: f64, r: f64) -> (f64, f64, f64) {
        let (q, dq) = self.boundary(s);
        let (active, ds, dr) = match self.side {
            Side::Right => (q - r, dq, -1.0),
            Side::Left => (r - q, -dq, 1.0),
        };
        let lo = self.s_span.0 - ACTIVATION_MARGIN;
        let hi = self.s_span.1 + ACTIVATION_MARGIN;
        let (depth, direction) = if s < lo {
            (lo - s, -1.0)
        } else if s > hi {
            (s - hi, 1.0)
        } else {
            return (active, ds, dr);
        };
        if depth >= RAMP_LENGTH {
            return (INACTIVE_VALUE, 0.0, 0.0);
        }
        // Cubic smoothstep keeps h continuously differentiable at both ends.
        let t = depth / RAMP_LENGTH;
        let w = t * t * (3.0 - 2.0 * t);
        let dw_ds = 6.0 * t * (1.0 - t) / RAMP_LENGTH * direction;
        let value = (1.0 - w) * active + w * INACTIVE_VALUE;
        let grad_s = (1.0 - w) * ds + dw_ds * (INACTIVE_VALUE - active);
        (value, grad_s, (1.0 - w) * dr)
    }

    pub fn h(&self, state: &VehicleState) -> f64 {
        self.h_with_gradient(state.s, state.r).0
    }
}
