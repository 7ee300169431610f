//! Formation definition and follower reference construction.

use crate::dynamics::{Knot, Trajectory, VehicleState};
use crate::error::{Error, Result};
use crate::road::RoadModel;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Desired offset `(s, r)` in meters.
pub type Offset = (f64, f64);

/// Shape matrix, formation tree and priority list of one formation.
///
/// `parents[i]` is the vehicle whose plan `i` offsets to build its
/// reference; the root (vehicle 0) has none. `priority` lists vehicle ids
/// from highest to lowest priority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationSpec {
    pub name: String,
    pub shape: Vec<Offset>,
    pub parents: Vec<Option<usize>>,
    pub priority: Vec<usize>,
    /// When set, row 0 may differ from the origin: the shape is expressed
    /// relative to a virtual reference point instead of vehicle 0.
    #[serde(default)]
    pub virtual_leader: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    SizeMismatch { shape: usize, parents: usize, priority: usize },
    LeaderNotAtOrigin { row: Offset },
    RootHasParent { parent: usize },
    MissingParent { node: usize },
    ParentOutOfRange { node: usize, parent: usize },
    Cycle { node: usize },
    PriorityNotPermutation,
    /// `higher` precedes `lower` in the priority list but sits behind it.
    PriorityOrder { higher: usize, lower: usize },
}

impl Violation {
    pub fn severity(&self, virtual_leader: bool) -> Severity {
        match self {
            Violation::LeaderNotAtOrigin { .. } if virtual_leader => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SizeMismatch { shape, parents, priority } => write!(
                f,
                "sizes disagree: {shape} shape rows, {parents} tree rows, {priority} priority entries"
            ),
            Violation::LeaderNotAtOrigin { row } => {
                write!(f, "shape row 0 is ({}, {}), not the origin", row.0, row.1)
            }
            Violation::RootHasParent { parent } => write!(f, "vehicle 0 has parent {parent}"),
            Violation::MissingParent { node } => write!(f, "vehicle {node} has no parent"),
            Violation::ParentOutOfRange { node, parent } => {
                write!(f, "vehicle {node} has unknown parent {parent}")
            }
            Violation::Cycle { node } => write!(f, "vehicle {node} is not reachable from vehicle 0"),
            Violation::PriorityNotPermutation => write!(f, "priority list is not a permutation"),
            Violation::PriorityOrder { higher, lower } => write!(
                f,
                "vehicle {higher} outranks vehicle {lower} but has a smaller desired abscissa"
            ),
        }
    }
}

impl FormationSpec {
    pub fn new(name: impl Into<String>, shape: Vec<Offset>, parents: Vec<Option<usize>>, priority: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            shape,
            parents,
            priority,
            virtual_leader: false,
        }
    }

    /// Builds the tree from an adjacency matrix where `g[i][j] = 1` means
    /// vehicle `i` takes its reference from vehicle `j`.
    pub fn from_adjacency(
        name: impl Into<String>,
        shape: Vec<Offset>,
        adjacency: &[Vec<u8>],
        priority: Vec<usize>,
    ) -> Result<Self> {
        let mut parents = Vec::with_capacity(adjacency.len());
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != adjacency.len() {
                return Err(Error::InvalidFormation(format!("adjacency row {i} has {} entries", row.len())));
            }
            let ones: Vec<usize> = row.iter().enumerate().filter(|(_, &g)| g != 0).map(|(j, _)| j).collect();
            match ones.as_slice() {
                [] => parents.push(None),
                [p] => parents.push(Some(*p)),
                _ => {
                    return Err(Error::InvalidFormation(format!(
                        "vehicle {i} has {} parents in the adjacency matrix",
                        ones.len()
                    )))
                }
            }
        }
        Ok(Self::new(name, shape, parents, priority))
    }

    pub fn adjacency(&self) -> Vec<Vec<u8>> {
        let n = self.len();
        let mut g = vec![vec![0u8; n]; n];
        for (i, p) in self.parents.iter().enumerate() {
            if let Some(p) = p {
                if *p < n {
                    g[i][*p] = 1;
                }
            }
        }
        g
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    /// Position of `vehicle` in the priority list (0 = highest).
    pub fn rank(&self, vehicle: usize) -> usize {
        self.priority
            .iter()
            .position(|&v| v == vehicle)
            .unwrap_or(usize::MAX)
    }

    pub fn parent(&self, vehicle: usize) -> Option<usize> {
        self.parents.get(vehicle).copied().flatten()
    }

    /// Checks tree structure, priority permutation and the ordering
    /// constraint between priorities and desired abscissae.
    ///
    /// Returns every violation found; warnings are included but do not
    /// make the result an error.
    pub fn validate(&self) -> std::result::Result<Vec<Violation>, Vec<Violation>> {
        let mut out = Vec::new();
        let n = self.shape.len();
        if self.parents.len() != n || self.priority.len() != n || n == 0 {
            out.push(Violation::SizeMismatch {
                shape: n,
                parents: self.parents.len(),
                priority: self.priority.len(),
            });
            return Err(out);
        }
        if self.shape[0] != (0.0, 0.0) {
            out.push(Violation::LeaderNotAtOrigin { row: self.shape[0] });
        }

        if let Some(p) = self.parents[0] {
            out.push(Violation::RootHasParent { parent: p });
        }
        for (i, p) in self.parents.iter().enumerate().skip(1) {
            match p {
                None => out.push(Violation::MissingParent { node: i }),
                Some(p) if *p >= n => out.push(Violation::ParentOutOfRange { node: i, parent: *p }),
                _ => {}
            }
        }
        // Every node must reach the root by following parents.
        for start in 1..n {
            let mut node = start;
            let mut steps = 0;
            while node != 0 && steps <= n {
                match self.parents[node] {
                    Some(p) if p < n => node = p,
                    _ => break,
                }
                steps += 1;
            }
            if node != 0 && matches!(self.parents[start], Some(p) if p < n) {
                out.push(Violation::Cycle { node: start });
            }
        }

        let mut seen = vec![false; n];
        let mut permutation = true;
        for &v in &self.priority {
            if v >= n || seen[v] {
                permutation = false;
                break;
            }
            seen[v] = true;
        }
        if !permutation {
            out.push(Violation::PriorityNotPermutation);
        } else {
            // rank(i) < rank(j) => s_i >= s_j; the converse direction for a
            // strict gap follows by contraposition.
            for (a, &hi) in self.priority.iter().enumerate() {
                for &lo in &self.priority[a + 1..] {
                    if self.shape[hi].0 < self.shape[lo].0 {
                        out.push(Violation::PriorityOrder { higher: hi, lower: lo });
                    }
                }
            }
        }

        if out.iter().any(|v| v.severity(self.virtual_leader) == Severity::Error) {
            Err(out)
        } else {
            Ok(out)
        }
    }

    /// Desired position of `j` relative to `i`.
    pub fn relative_offset(&self, j: usize, i: usize) -> Offset {
        (self.shape[j].0 - self.shape[i].0, self.shape[j].1 - self.shape[i].1)
    }
}

/// Longitudinal, lateral and combined formation error of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FormationError {
    pub e_s: f64,
    pub e_r: f64,
    pub e: f64,
}

impl FormationError {
    pub fn new(e_s: f64, e_r: f64) -> Self {
        Self {
            e_s,
            e_r,
            e: e_s.hypot(e_r),
        }
    }
}

/// Error of vehicle `j` against the leader's position plus its desired offset.
pub fn formation_error(state_j: &VehicleState, state_leader: &VehicleState, spec: &FormationSpec, j: usize) -> FormationError {
    let (ds, dr) = spec.relative_offset(j, 0);
    FormationError::new(state_j.s - (state_leader.s + ds), state_j.r - (state_leader.r + dr))
}

/// Reference for a follower: the parent's plan, extrapolated to cover
/// `[now, now + horizon]`, shifted by `offset`, with speed, heading and
/// curvature set to zero, sampled every `dt`.
pub fn make_reference(
    parent: &Trajectory,
    offset: Offset,
    now: f64,
    horizon: f64,
    dt: f64,
    road: &RoadModel,
    follower: usize,
) -> Result<Trajectory> {
    if parent.t0 > now + 1e-9 {
        return Err(Error::Coverage(format!(
            "parent plan starts at {} after the current time {now}",
            parent.t0
        )));
    }
    let knots_needed = (horizon / dt).round() as usize;
    let extended = parent.extrapolate(now + horizon, road)?;
    let knots = (0..=knots_needed)
        .map(|k| {
            let p = extended.state_at(now + k as f64 * dt);
            Knot {
                state: VehicleState::new(p.s + offset.0, p.r + offset.1, 0.0, 0.0, 0.0),
                control: Default::default(),
            }
        })
        .collect();
    Trajectory::new(follower, now, dt, knots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ControlInput;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    pub(crate) fn triangle() -> FormationSpec {
        FormationSpec::from_adjacency(
            "triangle",
            vec![(0.0, 0.0), (-10.0, 3.0), (-10.0, -3.0)],
            &[vec![0, 0, 0], vec![1, 0, 0], vec![0, 1, 0]],
            vec![0, 1, 2],
        )
        .unwrap()
    }

    #[test]
    fn adjacency_reading() {
        let spec = triangle();
        assert_eq!(spec.parents, vec![None, Some(0), Some(1)]);
        assert_eq!(spec.adjacency(), vec![vec![0, 0, 0], vec![1, 0, 0], vec![0, 1, 0]]);
    }

    #[test]
    fn validate_examples() {
        assert!(triangle().validate().is_ok());

        let mut swapped = triangle();
        swapped.priority = vec![0, 2, 1];
        assert!(swapped.validate().is_ok());

        let mut bad = triangle();
        bad.priority = vec![1, 0, 2];
        let violations = bad.validate().unwrap_err();
        assert!(violations.contains(&Violation::PriorityOrder { higher: 1, lower: 0 }));
    }

    #[test]
    fn validate_tree_defects() {
        let mut spec = triangle();
        spec.parents = vec![None, Some(2), Some(1)];
        let v = spec.validate().unwrap_err();
        assert!(v.contains(&Violation::Cycle { node: 1 }));
        assert!(v.contains(&Violation::Cycle { node: 2 }));

        let mut spec = triangle();
        spec.parents = vec![Some(1), Some(0), None];
        let v = spec.validate().unwrap_err();
        assert!(v.contains(&Violation::RootHasParent { parent: 1 }));
        assert!(v.contains(&Violation::MissingParent { node: 2 }));

        let mut spec = triangle();
        spec.priority = vec![0, 0, 2];
        assert!(spec.validate().unwrap_err().contains(&Violation::PriorityNotPermutation));
    }

    #[test]
    fn leader_offset_is_a_warning_only_for_virtual_leaders() {
        let mut spec = FormationSpec::new(
            "abreast",
            vec![(0.0, 3.0), (0.0, -3.0), (-10.0, 3.0), (-10.0, -3.0)],
            vec![None, Some(0), Some(0), Some(1)],
            vec![0, 1, 2, 3],
        );
        assert!(spec.validate().is_err());
        spec.virtual_leader = true;
        let warnings = spec.validate().unwrap();
        assert_eq!(warnings, vec![Violation::LeaderNotAtOrigin { row: (0.0, 3.0) }]);
    }

    #[test]
    fn relative_offset_examples() {
        let spec = triangle();
        assert_eq!(spec.relative_offset(1, 0), (-10.0, 3.0));
        assert_eq!(spec.relative_offset(2, 1), (0.0, -6.0));
        assert_eq!(spec.relative_offset(2, 2), (0.0, 0.0));
    }

    #[test]
    fn formation_error_examples() {
        let spec = triangle();
        let leader = VehicleState::new(100.0, 0.0, 6.0, 0.0, 0.0);
        let e = formation_error(&VehicleState::new(90.0, 3.0, 6.0, 0.0, 0.0), &leader, &spec, 1);
        assert_eq!(e, FormationError::new(0.0, 0.0));
        let e = formation_error(&VehicleState::new(91.0, 3.0, 6.0, 0.0, 0.0), &leader, &spec, 1);
        assert_eq!((e.e_s, e.e_r, e.e), (1.0, 0.0, 1.0));
        let e = formation_error(&VehicleState::new(90.0, 4.0, 6.0, 0.0, 0.0), &leader, &spec, 1);
        assert_eq!(e.e, 1.0);
    }

    fn road() -> RoadModel {
        RoadModel::straight(1000.0, -10.0, 10.0).unwrap()
    }

    fn parent_plan(v: f64) -> Trajectory {
        Trajectory::rollout(0, 0.0, 0.25, VehicleState::new(20.0, 0.0, v, 0.0, 0.0), &[ControlInput::default(); 20], &road()).unwrap()
    }

    #[test]
    fn reference_of_static_parent() {
        let reference = make_reference(&parent_plan(0.0), (-10.0, 3.0), 1.0, 5.0, 0.25, &road(), 1).unwrap();
        assert_eq!(reference.knots.len(), 21);
        for knot in &reference.knots {
            assert_eq!(knot.state, VehicleState::new(10.0, 3.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn reference_of_cruising_parent() {
        let reference = make_reference(&parent_plan(6.0), (-10.0, 3.0), 0.0, 5.0, 0.25, &road(), 1).unwrap();
        for (k, knot) in reference.knots.iter().enumerate() {
            let t = k as f64 * 0.25;
            assert_abs_diff_eq!(knot.state.s, 20.0 + 6.0 * t - 10.0, epsilon = 1e-9);
            assert_eq!((knot.state.r, knot.state.v, knot.state.theta, knot.state.k), (3.0, 0.0, 0.0, 0.0));
        }
        // A later window needs extrapolation past the plan end.
        let late = make_reference(&parent_plan(6.0), (0.0, 0.0), 0.6, 5.0, 0.25, &road(), 1).unwrap();
        assert_abs_diff_eq!(late.knots[20].state.s, 20.0 + 6.0 * 5.6, epsilon = 1e-9);
    }

    #[test]
    fn reference_with_zero_offset() {
        let plan = Trajectory::rollout(
            0,
            0.0,
            0.25,
            VehicleState::new(5.0, 1.0, 4.0, 0.05, 0.01),
            &[ControlInput::new(0.5, 0.01); 20],
            &road(),
        )
        .unwrap();
        let reference = make_reference(&plan, (0.0, 0.0), 0.0, 5.0, 0.25, &road(), 1).unwrap();
        for (a, b) in reference.knots.iter().zip(&plan.knots) {
            assert_eq!((a.state.s, a.state.r), (b.state.s, b.state.r));
            assert_eq!((a.state.v, a.state.theta, a.state.k), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn reference_requires_coverage() {
        let mut plan = parent_plan(6.0);
        plan.t0 = 3.0;
        assert!(matches!(
            make_reference(&plan, (0.0, 0.0), 1.0, 5.0, 0.25, &road(), 1),
            Err(Error::Coverage(_))
        ));
    }

    proptest! {
        #[test]
        fn offsets_are_antisymmetric(rows in proptest::collection::vec((-50.0f64..0.0, -6.0f64..6.0), 2..6)) {
            let n = rows.len();
            let spec = FormationSpec::new("p", rows, vec![None; n], (0..n).collect());
            for i in 0..n {
                for j in 0..n {
                    let a = spec.relative_offset(j, i);
                    let b = spec.relative_offset(i, j);
                    prop_assert_eq!(a.0, -b.0);
                    prop_assert_eq!(a.1, -b.1);
                }
            }
        }

        #[test]
        fn error_is_translation_invariant(
            sj in 0.0f64..200.0, rj in -5.0f64..5.0, sl in 0.0f64..200.0, rl in -5.0f64..5.0,
            ds in -50.0f64..50.0, dr in -3.0f64..3.0,
        ) {
            let spec = triangle();
            let a = formation_error(&VehicleState::new(sj, rj, 0.0, 0.0, 0.0), &VehicleState::new(sl, rl, 0.0, 0.0, 0.0), &spec, 1);
            let b = formation_error(&VehicleState::new(sj + ds, rj + dr, 0.0, 0.0, 0.0), &VehicleState::new(sl + ds, rl + dr, 0.0, 0.0, 0.0), &spec, 1);
            prop_assert!((a.e - b.e).abs() < 1e-9);
        }

        #[test]
        fn zero_offset_static_reference_is_idempotent(s in 0.0f64..500.0, r in -5.0f64..5.0) {
            let plan = Trajectory::rollout(0, 0.0, 0.25, VehicleState::new(s, r, 0.0, 0.0, 0.0), &[ControlInput::default(); 20], &road()).unwrap();
            let once = make_reference(&plan, (0.0, 0.0), 0.0, 5.0, 0.25, &road(), 0).unwrap();
            let twice = make_reference(&once, (0.0, 0.0), 0.0, 5.0, 0.25, &road(), 0).unwrap();
            for (a, b) in once.knots.iter().zip(&twice.knots) {
                prop_assert_eq!((a.state.s, a.state.r), (b.state.s, b.state.r));
            }
        }
    }
}
