//! Scenario files: TOML description of a road, vehicles, formations,
//! obstacles and run settings. See `docs/scenario-format.md` for the grammar.

use crate::dynamics::{BoundSet, VehicleState};
use crate::error::{Error, FieldError, Result};
use crate::formation::{FormationSpec, Offset, Severity};
use crate::mpc::{SolverSettings, Weights};
use crate::obstacle::{FrenetPoint, ObstacleParabola, Side};
use crate::partition::{protected_region_conflicts, PartitionGeometry};
use crate::reconfig::{ReconfigurationPlan, SwitchPolicy};
use crate::road::{Pose, RoadModel, ValidityGrid};
use crate::sim::SimConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

pub const SCENARIO1: &str = include_str!("../scenarios/scenario1.toml");
pub const SCENARIO2: &str = include_str!("../scenarios/scenario2.toml");

/// Names accepted in place of a path for the bundled files.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "scenario1" => Some(SCENARIO1),
        "scenario2" => Some(SCENARIO2),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadConfig {
    pub length: f64,
    #[serde(default)]
    pub origin: Pose,
    /// `(s, c)` knots of the centerline curvature.
    pub curvature: Vec<(f64, f64)>,
    /// `(s, r)` knots of the left bound.
    pub left: Vec<(f64, f64)>,
    /// `(s, r)` knots of the right bound.
    pub right: Vec<(f64, f64)>,
}

impl RoadConfig {
    pub fn build(&self) -> Result<RoadModel> {
        RoadModel::new(&self.curvature, &self.left, &self.right, self.length, self.origin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub initial: VehicleState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Weights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationConfig {
    pub name: String,
    pub shape: Vec<Offset>,
    /// `adjacency[j][i] = 1` when vehicle `j` follows vehicle `i`.
    pub adjacency: Vec<Vec<u8>>,
    pub priority: Vec<usize>,
    #[serde(default)]
    pub virtual_leader: bool,
}

impl FormationConfig {
    pub fn build(&self) -> Result<FormationSpec> {
        let mut spec = FormationSpec::from_adjacency(self.name.clone(), self.shape.clone(), &self.adjacency, self.priority.clone())?;
        spec.virtual_leader = self.virtual_leader;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub sequence: Vec<String>,
    #[serde(default = "no_switches")]
    pub switch: SwitchPolicy,
}

fn no_switches() -> SwitchPolicy {
    SwitchPolicy::Scheduled { times: Vec::new() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    pub triangle: [FrenetPoint; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
}

fn default_cruise() -> f64 {
    6.0
}

fn default_bounds() -> BoundSet {
    BoundSet::default()
}

fn leader_weights() -> Weights {
    Weights::leader()
}

fn follower_weights() -> Weights {
    Weights::follower()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Formation cruise speed, m/s.
    #[serde(default = "default_cruise")]
    pub cruise_speed: f64,
    #[serde(default = "default_bounds")]
    pub bounds: BoundSet,
    /// Weights of vehicle 0 unless overridden per vehicle.
    #[serde(default = "leader_weights")]
    pub leader_weights: Weights,
    /// Weights of every other vehicle unless overridden.
    #[serde(default = "follower_weights")]
    pub follower_weights: Weights,
    pub road: RoadConfig,
    #[serde(default)]
    pub partition: PartitionGeometry,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    pub vehicles: Vec<VehicleConfig>,
    pub formations: Vec<FormationConfig>,
    pub plan: PlanConfig,
    #[serde(default)]
    pub obstacles: Vec<ObstacleConfig>,
}

/// A validated scenario with its runtime objects built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub road: RoadModel,
    pub obstacles: Vec<ObstacleParabola>,
    pub plan: ReconfigurationPlan,
}

impl Scenario {
    pub fn vehicle_count(&self) -> usize {
        self.config.vehicles.len()
    }

    pub fn weights(&self, vehicle: usize) -> Weights {
        self.config.vehicle_weights(vehicle)
    }

    pub fn bounds(&self, vehicle: usize) -> BoundSet {
        self.config.vehicle_bounds(vehicle)
    }
}

impl ScenarioConfig {
    /// Parses and validates TOML text.
    pub fn parse(text: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let at = e
                .span()
                .map(|span| {
                    let line = text[..span.start].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "document".into());
            Error::Scenario(vec![FieldError::new(at, e.message().trim().to_string())])
        })?;
        let errors = config.validate();
        if errors.is_empty() {
            Ok(config)
        } else {
            Err(Error::Scenario(errors))
        }
    }

    /// Reads a file, or one of the bundled scenarios by name.
    pub fn load(path_or_name: &str) -> Result<Self> {
        if let Some(text) = bundled(path_or_name) {
            return Self::parse(text);
        }
        let text = std::fs::read_to_string(Path::new(path_or_name))
            .map_err(|e| Error::Io(format!("{path_or_name}: {e}")))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario fields are TOML-representable")
    }

    pub fn vehicle_weights(&self, vehicle: usize) -> Weights {
        self.vehicles
            .get(vehicle)
            .and_then(|v| v.weights)
            .unwrap_or(if vehicle == 0 { self.leader_weights } else { self.follower_weights })
    }

    pub fn vehicle_bounds(&self, vehicle: usize) -> BoundSet {
        self.vehicles.get(vehicle).and_then(|v| v.bounds).unwrap_or(self.bounds)
    }

    /// Every problem found, each with the dotted path of the offending field.
    pub fn validate(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut push = |path: String, reason: String| errs.push(FieldError::new(path, reason));

        if self.name.trim().is_empty() {
            push("name".into(), "must not be empty".into());
        }
        if let Err(e) = self.bounds.validate() {
            push("bounds".into(), e);
        }
        if !(self.cruise_speed >= self.bounds.v_min && self.cruise_speed <= self.bounds.v_max) {
            push(
                "cruise_speed".into(),
                format!("{} outside [{}, {}]", self.cruise_speed, self.bounds.v_min, self.bounds.v_max),
            );
        }
        for (field, w) in [("leader_weights", &self.leader_weights), ("follower_weights", &self.follower_weights)] {
            if let Err(e) = w.validate() {
                push(field.into(), e);
            }
        }
        if let Err(e) = PartitionGeometry::new(self.partition.delta_s, self.partition.delta_r) {
            push("partition".into(), e.to_string());
        }
        for (field, reason) in self.sim.validate() {
            push(format!("sim.{field}"), reason);
        }
        let s = &self.solver;
        if s.knots == 0 {
            push("solver.knots".into(), "must be at least 1".into());
        }
        if !(s.horizon > 0.0 && s.horizon.is_finite()) {
            push("solver.horizon".into(), format!("must be positive, got {}", s.horizon));
        }
        if s.max_iterations == 0 {
            push("solver.max_iterations".into(), "must be at least 1".into());
        }
        if !(s.tolerance > 0.0) {
            push("solver.tolerance".into(), "must be positive".into());
        }
        if !(s.road_margin >= 0.0) {
            push("solver.road_margin".into(), "must be non-negative".into());
        }
        if !(s.elastic_penalty > 0.0) {
            push("solver.elastic_penalty".into(), "must be positive".into());
        }

        let road = match self.road.build() {
            Ok(road) => {
                let bad = road.check_validity(ValidityGrid::default());
                if let Some(&(s, r)) = bad.first() {
                    push(
                        "road.curvature".into(),
                        format!("band crosses the curvature centre at s={s:.2}, r={r:.2} ({} samples)", bad.len()),
                    );
                }
                Some(road)
            }
            Err(e) => {
                push("road".into(), e.to_string());
                None
            }
        };

        let n = self.vehicles.len();
        if n == 0 {
            push("vehicles".into(), "at least one vehicle is required".into());
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            let path = format!("vehicles[{i}]");
            let bounds = self.vehicle_bounds(i);
            if let Some(b) = &v.bounds {
                if let Err(e) = b.validate() {
                    push(format!("{path}.bounds"), e);
                }
            }
            if let Some(w) = &v.weights {
                if let Err(e) = w.validate() {
                    push(format!("{path}.weights"), e);
                }
            }
            let x = &v.initial;
            if !x.is_finite() {
                push(format!("{path}.initial"), "state must be finite".into());
                continue;
            }
            if x.v < bounds.v_min || x.v > bounds.v_max {
                push(format!("{path}.initial.v"), format!("{} outside [{}, {}]", x.v, bounds.v_min, bounds.v_max));
            }
            if x.k.abs() > bounds.k_max || (x.v * x.v * x.k).abs() > bounds.a_lat_max {
                push(format!("{path}.initial.k"), format!("curvature {} exceeds the bounds", x.k));
            }
            if x.theta.abs() >= std::f64::consts::FRAC_PI_2 {
                push(format!("{path}.initial.theta"), "vehicle must face forward along the road".into());
            }
            if let Some(road) = &road {
                if !(0.0..=road.s_max()).contains(&x.s) {
                    push(format!("{path}.initial.s"), format!("{} outside [0, {}]", x.s, road.s_max()));
                } else {
                    let (hi, lo) = (road.left_bound(x.s).0, road.right_bound(x.s).0);
                    if x.r < lo || x.r > hi {
                        push(format!("{path}.initial.r"), format!("{} outside the road band [{lo}, {hi}]", x.r));
                    }
                }
            }
        }

        let mut names = BTreeSet::new();
        let mut specs = Vec::new();
        for (f, cfg) in self.formations.iter().enumerate() {
            let path = format!("formations[{f}]");
            if !names.insert(cfg.name.as_str()) {
                push(format!("{path}.name"), format!("duplicate formation name '{}'", cfg.name));
            }
            if cfg.shape.len() != n {
                push(format!("{path}.shape"), format!("{} rows for {n} vehicles", cfg.shape.len()));
                specs.push(None);
                continue;
            }
            match cfg.build() {
                Ok(spec) => {
                    match spec.validate() {
                        Ok(_) => {
                            for (j, i) in protected_region_conflicts(&spec, &self.partition) {
                                push(
                                    format!("{path}.shape"),
                                    format!("vehicle {j} sits in the protected region of vehicle {i}"),
                                );
                            }
                        }
                        Err(violations) => {
                            for v in violations.iter().filter(|v| v.severity(spec.virtual_leader) == Severity::Error) {
                                push(path.clone(), v.to_string());
                            }
                        }
                    }
                    specs.push(Some(spec));
                }
                Err(e) => {
                    push(format!("{path}.adjacency"), e.to_string());
                    specs.push(None);
                }
            }
        }

        if self.plan.sequence.is_empty() {
            push("plan.sequence".into(), "must name at least one formation".into());
        }
        let mut steps = Vec::new();
        for (k, name) in self.plan.sequence.iter().enumerate() {
            match self.formations.iter().position(|f| &f.name == name) {
                Some(idx) => steps.push(specs[idx].clone()),
                None => push(format!("plan.sequence[{k}]"), format!("undefined formation '{name}'")),
            }
        }
        if steps.len() == self.plan.sequence.len() && !steps.is_empty() && steps.iter().all(Option::is_some) {
            let plan = ReconfigurationPlan {
                steps: steps.into_iter().flatten().collect(),
                switch_policy: self.plan.switch.clone(),
            };
            if let Err(e) = plan.validate(&self.partition) {
                push("plan".into(), e.to_string());
            }
        }

        for (o, cfg) in self.obstacles.iter().enumerate() {
            if let Some(road) = &road {
                if let Err(e) = ObstacleParabola::from_triangle(cfg.triangle, cfg.side, road) {
                    push(format!("obstacles[{o}]"), e.to_string());
                }
            }
        }
        errs
    }

    /// Builds the runtime objects. Fails with every validation error.
    pub fn build(&self) -> Result<Scenario> {
        let errors = self.validate();
        if !errors.is_empty() {
            return Err(Error::Scenario(errors));
        }
        let road = self.road.build()?;
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| ObstacleParabola::from_triangle(o.triangle, o.side, &road))
            .collect::<Result<Vec<_>>>()?;
        let steps = self
            .plan
            .sequence
            .iter()
            .map(|name| {
                self.formations
                    .iter()
                    .find(|f| &f.name == name)
                    .expect("validated")
                    .build()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scenario {
            config: self.clone(),
            road,
            obstacles,
            plan: ReconfigurationPlan {
                steps,
                switch_policy: self.plan.switch.clone(),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenario1_parses() {
        let cfg = ScenarioConfig::parse(SCENARIO1).unwrap();
        assert_eq!(cfg.vehicles.len(), 3);
        let spec = cfg.formations[0].build().unwrap();
        assert_eq!(spec.shape, vec![(0.0, 0.0), (-10.0, 3.0), (-10.0, -3.0)]);
        assert_eq!(spec.parents, vec![None, Some(0), Some(1)]);
        assert_eq!(cfg.sim.duration, 40.0);
    }

    #[test]
    fn bundled_scenario2_parses() {
        let cfg = ScenarioConfig::parse(SCENARIO2).unwrap();
        assert_eq!(cfg.vehicles.len(), 4);
        assert_eq!(cfg.plan.sequence, vec!["S1", "S2", "S3", "S4"]);
        assert_eq!(
            cfg.plan.switch,
            SwitchPolicy::Scheduled {
                times: vec![15.4, 30.8, 46.5]
            }
        );
        assert_eq!(cfg.sim.duration, 60.0);
    }

    #[test]
    fn bundled_defaults_match_reference_parameters() {
        for text in [SCENARIO1, SCENARIO2] {
            let cfg = ScenarioConfig::parse(text).unwrap();
            let b = cfg.bounds;
            assert_eq!((b.v_min, b.v_max, b.a_max, b.k_max, b.kappa_max, b.a_lat_max), (0.0, 10.0, 2.5, 0.2, 0.1, 2.5));
            assert_eq!(cfg.leader_weights.q, [0.0, 4.0, 2.0, 20.0, 20.0]);
            assert_eq!(cfg.leader_weights.r, [1.0, 200.0]);
            assert_eq!(cfg.follower_weights.q, [1.0, 2.0, 0.0, 20.0, 20.0]);
            assert_eq!(cfg.follower_weights.r, [1.0, 200.0]);
            assert_eq!(cfg.follower_weights.slack_penalty, 10000.0);
            assert_eq!(cfg.solver.horizon, 5.0);
            assert_eq!(cfg.sim.replanning_interval, 0.256);
            assert_eq!((cfg.partition.delta_s, cfg.partition.delta_r), (10.0, 3.0));
            assert_eq!(cfg.cruise_speed, 6.0);
            assert!(cfg.vehicles.iter().all(|v| v.weights.is_none() && v.bounds.is_none()));
        }
    }

    #[test]
    fn round_trip_through_toml() {
        for text in [SCENARIO1, SCENARIO2] {
            let cfg = ScenarioConfig::parse(text).unwrap();
            let again = ScenarioConfig::parse(&cfg.to_toml()).unwrap();
            assert_eq!(cfg, again);
        }
    }

    #[test]
    fn undefined_formation_named() {
        let text = SCENARIO1.replace("sequence = [\"triangle\"]", "sequence = [\"wedge\"]");
        assert_ne!(text, SCENARIO1);
        let Err(Error::Scenario(errs)) = ScenarioConfig::parse(&text) else {
            panic!("expected scenario errors");
        };
        assert!(errs.iter().any(|e| e.path == "plan.sequence[0]" && e.reason.contains("wedge")), "{errs:?}");
    }

    #[test]
    fn syntax_error_located() {
        let Err(Error::Scenario(errs)) = ScenarioConfig::parse("name = \"x\"\n[road\n") else {
            panic!("expected a syntax error");
        };
        assert_eq!(errs[0].path, "line 2");
    }

    #[test]
    fn unknown_field_rejected() {
        let text = format!("{SCENARIO1}\n[extra]\nfoo = 1\n");
        assert!(ScenarioConfig::parse(&text).is_err());
    }

    #[test]
    fn initial_state_outside_band_reported() {
        let mut cfg = ScenarioConfig::parse(SCENARIO1).unwrap();
        cfg.vehicles[1].initial.r = 50.0;
        cfg.vehicles[2].initial.v = 20.0;
        let errs = cfg.validate();
        assert!(errs.iter().any(|e| e.path == "vehicles[1].initial.r"));
        assert!(errs.iter().any(|e| e.path == "vehicles[2].initial.v"));
    }

    #[test]
    fn shape_size_mismatch_reported() {
        let mut cfg = ScenarioConfig::parse(SCENARIO1).unwrap();
        cfg.formations[0].shape.pop();
        assert!(cfg.validate().iter().any(|e| e.path == "formations[0].shape"));
    }

    #[test]
    fn offset_in_protected_region_reported() {
        let mut cfg = ScenarioConfig::parse(SCENARIO1).unwrap();
        cfg.formations[0].shape[1] = (-5.0, 0.0);
        let errors = cfg.validate();
        assert!(
            errors.iter().any(|e| e.path == "formations[0].shape" && e.reason.contains("protected")),
            "{errors:?}"
        );
    }

    #[test]
    fn unreachable_plan_reported() {
        let mut cfg = ScenarioConfig::parse(SCENARIO2).unwrap();
        // S1 straight to S3 swaps the two flank vehicles.
        cfg.plan.sequence = vec!["S1".into(), "S3".into()];
        cfg.plan.switch = SwitchPolicy::Scheduled { times: vec![10.0] };
        assert!(cfg.validate().iter().any(|e| e.path == "plan"));
    }
}
