//! Priority-based intra-formation collision rules.
//!
//! Around every vehicle `i`, three affine functions meeting at the pivot
//! `(s_i - Δs, r_i)` cut the plane into six sectors. The forward sector
//! `A0` contains the vehicle and is protected: lower-priority vehicles are
//! kept out of it through a single half-plane rule chosen from the
//! formation shape.

use crate::error::{Error, Result};
use crate::formation::{FormationSpec, Offset};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionGeometry {
    pub delta_s: f64,
    pub delta_r: f64,
}

impl Default for PartitionGeometry {
    fn default() -> Self {
        Self {
            delta_s: 10.0,
            delta_r: 3.0,
        }
    }
}

impl PartitionGeometry {
    pub fn new(delta_s: f64, delta_r: f64) -> Result<Self> {
        if !(delta_s > 0.0 && delta_r > 0.0) {
            return Err(Error::InvalidFormation(format!(
                "partition extents must be positive, got ({delta_s}, {delta_r})"
            )));
        }
        Ok(Self { delta_s, delta_r })
    }
}

/// Half-plane rule `g^l <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    /// `g¹ <= 0`: left of the upper boundary.
    Left = 1,
    /// `g² <= 0`: right of the lower boundary.
    Right = 2,
    /// `g³ <= 0`: behind the pivot.
    Behind = 3,
}

impl Rule {
    pub const ALL: [Rule; 3] = [Rule::Left, Rule::Right, Rule::Behind];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(l: u8) -> Option<Rule> {
        match l {
            1 => Some(Rule::Left),
            2 => Some(Rule::Right),
            3 => Some(Rule::Behind),
            _ => None,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.index())
    }
}

/// Value of `g^l` at `point` for the partition pivoted on `vehicle`.
pub fn g(rule: Rule, vehicle: (f64, f64), geom: &PartitionGeometry, point: (f64, f64)) -> f64 {
    let ds = (point.0 - vehicle.0) / geom.delta_s;
    let dr = (point.1 - vehicle.1) / geom.delta_r;
    match rule {
        Rule::Left => -dr + ds + 1.0,
        Rule::Right => dr + ds + 1.0,
        Rule::Behind => ds + 1.0,
    }
}

/// Gradient of `g^l` with respect to the constrained point `(s, r)`.
pub fn g_gradient(rule: Rule, geom: &PartitionGeometry) -> (f64, f64) {
    let ds = 1.0 / geom.delta_s;
    let dr = 1.0 / geom.delta_r;
    match rule {
        Rule::Left => (ds, -dr),
        Rule::Right => (ds, dr),
        Rule::Behind => (ds, 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionLabel {
    A0,
    A1,
    A2,
    A3,
    A4,
    A5,
}

impl RegionLabel {
    pub const SAFE: [RegionLabel; 5] = [
        RegionLabel::A1,
        RegionLabel::A2,
        RegionLabel::A3,
        RegionLabel::A4,
        RegionLabel::A5,
    ];

    /// Reflection across the vehicle's lateral position.
    pub fn mirrored(self) -> RegionLabel {
        match self {
            RegionLabel::A1 => RegionLabel::A5,
            RegionLabel::A5 => RegionLabel::A1,
            RegionLabel::A2 => RegionLabel::A4,
            RegionLabel::A4 => RegionLabel::A2,
            other => other,
        }
    }
}

/// Sector of `point` with respect to `vehicle`.
///
/// Each half-plane `g^l <= 0` is taken closed, so boundary points fall in
/// the sector on the non-positive side. Because `g¹ + g² = 2 g³`, the
/// sign patterns `(-, -, +)` and `(+, +, -)` cannot occur and the six
/// remaining patterns label the sectors.
pub fn classify_region(vehicle: (f64, f64), geom: &PartitionGeometry, point: (f64, f64)) -> RegionLabel {
    let g1 = g(Rule::Left, vehicle, geom, point) <= 0.0;
    let g2 = g(Rule::Right, vehicle, geom, point) <= 0.0;
    let g3 = g(Rule::Behind, vehicle, geom, point) <= 0.0;
    match (g1, g2, g3) {
        (false, false, false) => RegionLabel::A0,
        (true, false, false) => RegionLabel::A1,
        (true, false, true) => RegionLabel::A2,
        (true, true, _) => RegionLabel::A3,
        (false, true, true) => RegionLabel::A4,
        (false, true, false) => RegionLabel::A5,
        // Unreachable by the identity above up to rounding; both cases lie
        // on the pivot's rear boundary.
        (false, false, true) => RegionLabel::A3,
    }
}

/// Rule keeping `j` out of `i`'s protected sector, selected from the shape.
///
/// Rule 3 applies when `j` is meant to be at least `Δs` behind `i`;
/// otherwise the lateral sign of the desired offset picks rule 1 or 2.
pub fn select_rule(spec: &FormationSpec, geom: &PartitionGeometry, j: usize, i: usize) -> Result<Rule> {
    if spec.rank(i) >= spec.rank(j) {
        return Err(Error::PriorityOrder { i, j });
    }
    rule_for_offset(spec.relative_offset(j, i), geom).ok_or(Error::UnrepresentableShape { j, i })
}

pub(crate) fn rule_for_offset(offset: Offset, geom: &PartitionGeometry) -> Option<Rule> {
    let (s_ji, r_ji) = offset;
    if s_ji <= -geom.delta_s {
        Some(Rule::Behind)
    } else if r_ji > 0.0 {
        Some(Rule::Left)
    } else if r_ji < 0.0 {
        Some(Rule::Right)
    } else {
        None
    }
}

/// One soft half-plane constraint binding `constrained` to `watched`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConstraint {
    pub watched_vehicle: usize,
    pub constrained_vehicle: usize,
    pub rule: Rule,
    pub slack_weight: f64,
}

/// Constraints of vehicle `j` against every higher-priority vehicle, in
/// priority order.
pub fn active_constraints(
    spec: &FormationSpec,
    geom: &PartitionGeometry,
    j: usize,
    slack_weight: f64,
) -> Result<Vec<PartitionConstraint>> {
    let rank = spec.rank(j);
    spec.priority[..rank.min(spec.priority.len())]
        .iter()
        .map(|&i| {
            Ok(PartitionConstraint {
                watched_vehicle: i,
                constrained_vehicle: j,
                rule: select_rule(spec, geom, j, i)?,
                slack_weight,
            })
        })
        .collect()
}

/// Ordered pairs `(j, i)` whose desired offset places `j` inside `i`'s
/// protected sector. Such shapes cannot satisfy their own rules.
pub fn protected_region_conflicts(spec: &FormationSpec, geom: &PartitionGeometry) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (a, &i) in spec.priority.iter().enumerate() {
        for &j in &spec.priority[a + 1..] {
            if j < spec.len() && i < spec.len() && classify_region((0.0, 0.0), geom, spec.relative_offset(j, i)) == RegionLabel::A0 {
                out.push((j, i));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom() -> PartitionGeometry {
        PartitionGeometry::new(10.0, 3.0).unwrap()
    }

    fn triangle() -> FormationSpec {
        FormationSpec::new(
            "triangle",
            vec![(0.0, 0.0), (-10.0, 3.0), (-10.0, -3.0)],
            vec![None, Some(0), Some(1)],
            vec![0, 1, 2],
        )
    }

    #[test]
    fn g_examples() {
        let o = (0.0, 0.0);
        for rule in Rule::ALL {
            assert_eq!(g(rule, o, &geom(), (-10.0, 0.0)), 0.0);
        }
        assert_eq!(g(Rule::Left, o, &geom(), (0.0, 3.0)), 0.0);
        assert_eq!(g(Rule::Behind, o, &geom(), (-20.0, 0.0)), -1.0);
    }

    #[test]
    fn region_examples() {
        let o = (0.0, 0.0);
        assert_eq!(classify_region(o, &geom(), (5.0, 0.0)), RegionLabel::A0);
        assert_eq!(classify_region(o, &geom(), (-20.0, 0.0)), RegionLabel::A3);
        assert_eq!(classify_region(o, &geom(), (0.0, 6.0)), RegionLabel::A1);
        assert_eq!(classify_region(o, &geom(), (-10.0, 3.0)), RegionLabel::A2);
        assert_eq!(classify_region(o, &geom(), (0.0, -6.0)), RegionLabel::A5);
        assert_eq!(classify_region(o, &geom(), (-15.0, -6.0)), RegionLabel::A4);
        // The vehicle itself is always inside its protected sector.
        assert_eq!(classify_region((40.0, 2.0), &geom(), (40.0, 2.0)), RegionLabel::A0);
    }

    #[test]
    fn rule_selection_for_the_triangle() {
        let spec = triangle();
        assert_eq!(select_rule(&spec, &geom(), 1, 0).unwrap(), Rule::Behind);
        assert_eq!(select_rule(&spec, &geom(), 2, 1).unwrap(), Rule::Right);
        let far = FormationSpec::new("far", vec![(0.0, 0.0), (-25.0, 1.0)], vec![None, Some(0)], vec![0, 1]);
        assert_eq!(select_rule(&far, &geom(), 1, 0).unwrap(), Rule::Behind);
        assert!(matches!(select_rule(&spec, &geom(), 0, 1), Err(Error::PriorityOrder { .. })));
    }

    #[test]
    fn unrepresentable_shape() {
        let spec = FormationSpec::new("axis", vec![(0.0, 0.0), (-5.0, 0.0)], vec![None, Some(0)], vec![0, 1]);
        assert!(matches!(
            select_rule(&spec, &geom(), 1, 0),
            Err(Error::UnrepresentableShape { j: 1, i: 0 })
        ));
        assert_eq!(protected_region_conflicts(&spec, &geom()), vec![(1, 0)]);
    }

    #[test]
    fn active_constraint_lists() {
        let spec = triangle();
        let c1 = active_constraints(&spec, &geom(), 1, 1e4).unwrap();
        assert_eq!(c1.iter().map(|c| (c.watched_vehicle, c.rule)).collect::<Vec<_>>(), vec![(0, Rule::Behind)]);
        let c2 = active_constraints(&spec, &geom(), 2, 1e4).unwrap();
        assert_eq!(
            c2.iter().map(|c| (c.watched_vehicle, c.rule)).collect::<Vec<_>>(),
            vec![(0, Rule::Behind), (1, Rule::Right)]
        );
        assert!(active_constraints(&spec, &geom(), 0, 1e4).unwrap().is_empty());
    }

    #[test]
    fn safe_region_of_vehicle_two() {
        // g_1^2 <= 0 is exactly A3 ∪ A4 ∪ A5 around vehicle 1.
        let pivot = (50.0, 3.0);
        for &(ds, dr) in &[(-30.0, 0.0), (-12.0, -8.0), (5.0, -9.0), (0.0, -3.5), (2.0, 1.0), (-12.0, 4.0)] {
            let p = (pivot.0 + ds, pivot.1 + dr);
            let inside = g(Rule::Right, pivot, &geom(), p) <= 0.0;
            let region = classify_region(pivot, &geom(), p);
            assert_eq!(inside, matches!(region, RegionLabel::A3 | RegionLabel::A4 | RegionLabel::A5));
        }
    }

    fn arb_geom() -> impl Strategy<Value = PartitionGeometry> {
        (0.5f64..30.0, 0.5f64..10.0).prop_map(|(a, b)| PartitionGeometry::new(a, b).unwrap())
    }

    proptest! {
        #[test]
        fn boundaries_are_concurrent(ps in -100.0f64..100.0, pr in -10.0f64..10.0, geom in arb_geom()) {
            let point = (ps - geom.delta_s, pr);
            for rule in Rule::ALL {
                prop_assert!(g(rule, (ps, pr), &geom, point).abs() < 1e-12);
            }
        }

        #[test]
        fn mirror_symmetry(ds in -40.0f64..40.0, dr in -15.0f64..15.0, geom in arb_geom()) {
            let pivot = (10.0, 1.0);
            let a = (pivot.0 + ds, pivot.1 + dr);
            let b = (pivot.0 + ds, pivot.1 - dr);
            let ga = [Rule::Left, Rule::Right].map(|r| g(r, pivot, &geom, a));
            // Skip points within rounding of a boundary.
            prop_assume!(ga.iter().all(|v| v.abs() > 1e-9) && g(Rule::Behind, pivot, &geom, a).abs() > 1e-9);
            prop_assert_eq!(classify_region(pivot, &geom, b), classify_region(pivot, &geom, a).mirrored());
        }

        #[test]
        fn g_is_affine(
            a in (-50.0f64..50.0, -10.0f64..10.0), b in (-50.0f64..50.0, -10.0f64..10.0),
            pivot in (-50.0f64..50.0, -10.0f64..10.0), geom in arb_geom(),
        ) {
            let mid = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
            for rule in Rule::ALL {
                let lhs = g(rule, pivot, &geom, mid);
                let rhs = (g(rule, pivot, &geom, a) + g(rule, pivot, &geom, b)) / 2.0;
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn selected_rule_holds_at_the_desired_offset(
            rows in proptest::collection::vec((-40.0f64..0.0, -9.0f64..9.0), 1..5),
            geom in arb_geom(),
        ) {
            let mut shape = vec![(0.0, 0.0)];
            shape.extend(rows);
            let n = shape.len();
            // Priority by descending desired abscissa satisfies the ordering constraint.
            let mut priority: Vec<usize> = (0..n).collect();
            priority.sort_by(|&x, &y| shape[y].0.total_cmp(&shape[x].0).then(x.cmp(&y)));
            let spec = FormationSpec::new("p", shape, vec![None; n], priority.clone());
            let conflicts = protected_region_conflicts(&spec, &geom);
            for (a, &i) in priority.iter().enumerate() {
                for &j in &priority[a + 1..] {
                    let offset = spec.relative_offset(j, i);
                    match select_rule(&spec, &geom, j, i) {
                        Ok(rule) => {
                            let value = g(rule, (0.0, 0.0), &geom, offset);
                            // Satisfied exactly when the offset avoids A0.
                            prop_assert_eq!(value <= 1e-12, !conflicts.contains(&(j, i)));
                        }
                        Err(_) => prop_assert!(conflicts.contains(&(j, i))),
                    }
                }
            }
        }
    }
}
