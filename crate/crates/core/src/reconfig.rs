//! Switching between formations that share a priority list.

use crate::error::{Error, Result};
use crate::formation::{FormationError, FormationSpec, Offset};
use crate::partition::{
    classify_region, g, rule_for_offset, PartitionConstraint, PartitionGeometry, RegionLabel, Rule,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Rules whose half-plane contains the whole sector.
pub fn rule_set(label: RegionLabel) -> &'static [Rule] {
    match label {
        RegionLabel::A0 => &[],
        RegionLabel::A1 => &[Rule::Left],
        RegionLabel::A2 => &[Rule::Left, Rule::Behind],
        RegionLabel::A3 => &[Rule::Left, Rule::Right, Rule::Behind],
        RegionLabel::A4 => &[Rule::Right, Rule::Behind],
        RegionLabel::A5 => &[Rule::Right],
    }
}

/// Rules valid over both sectors, in index order.
pub fn common_rules(a: RegionLabel, b: RegionLabel) -> Vec<Rule> {
    rule_set(a).iter().copied().filter(|r| rule_set(b).contains(r)).collect()
}

pub fn regions_reachable(a: RegionLabel, b: RegionLabel) -> bool {
    !common_rules(a, b).is_empty()
}

/// Sector of a desired offset relative to a pivot vehicle at the origin.
pub fn region_of_offset(offset: Offset, geom: &PartitionGeometry) -> Result<RegionLabel> {
    match classify_region((0.0, 0.0), geom, offset) {
        RegionLabel::A0 => Err(Error::OffsetInProtectedRegion {
            s: offset.0,
            r: offset.1,
        }),
        label => Ok(label),
    }
}

fn ensure_isomorphic(a: &FormationSpec, b: &FormationSpec) -> Result<()> {
    if a.priority != b.priority || a.len() != b.len() {
        return Err(Error::NotIsomorphic);
    }
    Ok(())
}

/// Ordered pairs `(j, i)` with `i` ranked above `j`.
fn ranked_pairs(spec: &FormationSpec) -> impl Iterator<Item = (usize, usize)> + '_ {
    spec.priority
        .iter()
        .enumerate()
        .flat_map(move |(a, &i)| spec.priority[a + 1..].iter().map(move |&j| (j, i)))
}

pub fn is_one_step_reachable(from: &FormationSpec, to: &FormationSpec, geom: &PartitionGeometry) -> Result<bool> {
    ensure_isomorphic(from, to)?;
    for (j, i) in ranked_pairs(from) {
        let a = region_of_offset(from.relative_offset(j, i), geom)?;
        let b = region_of_offset(to.relative_offset(j, i), geom)?;
        if !regions_reachable(a, b) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Vehicles on the centerline in priority order, `gap` apart.
///
/// The tree is a chain along the priority list when vehicle 0 leads;
/// otherwise every follower is attached to vehicle 0 directly.
pub fn line_formation(template: &FormationSpec, gap: f64) -> FormationSpec {
    let n = template.len();
    let lead_rank = template.rank(0) as f64;
    let mut shape = vec![(0.0, 0.0); n];
    for (rank, &v) in template.priority.iter().enumerate() {
        shape[v] = ((lead_rank - rank as f64) * gap, 0.0);
    }
    let parents = if template.priority.first() == Some(&0) {
        let mut p = vec![None; n];
        for w in template.priority.windows(2) {
            p[w[1]] = Some(w[0]);
        }
        p
    } else {
        (0..n).map(|v| if v == 0 { None } else { Some(0) }).collect()
    };
    FormationSpec::new("LINE", shape, parents, template.priority.clone())
}

/// When the active formation advances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SwitchPolicy {
    /// Absolute switch times, one per transition.
    Scheduled { times: Vec<f64> },
    /// Advance once every vehicle's error stays below `epsilon` for `dwell` seconds.
    Threshold { epsilon: f64, dwell: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconfigurationPlan {
    pub steps: Vec<FormationSpec>,
    pub switch_policy: SwitchPolicy,
}

impl ReconfigurationPlan {
    /// Checks isomorphism and one-step reachability of consecutive steps.
    pub fn validate(&self, geom: &PartitionGeometry) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::PlanningFailure("plan has no formations".into()));
        }
        for w in self.steps.windows(2) {
            if !is_one_step_reachable(&w[0], &w[1], geom)? {
                return Err(Error::PlanningFailure(format!(
                    "'{}' is not one-step reachable from '{}'",
                    w[1].name, w[0].name
                )));
            }
        }
        if let SwitchPolicy::Scheduled { times } = &self.switch_policy {
            if times.len() + 1 < self.steps.len() {
                return Err(Error::PlanningFailure(format!(
                    "{} switch times for {} transitions",
                    times.len(),
                    self.steps.len() - 1
                )));
            }
            if times.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::PlanningFailure("switch times must be non-decreasing".into()));
            }
        }
        Ok(())
    }
}

/// Direct transition when possible, otherwise through the line formation.
pub fn plan_sequence(
    current: &FormationSpec,
    goal: &FormationSpec,
    geom: &PartitionGeometry,
    line_gap: f64,
    switch_policy: SwitchPolicy,
) -> Result<ReconfigurationPlan> {
    ensure_isomorphic(current, goal)?;
    let steps = if current == goal {
        vec![current.clone()]
    } else if is_one_step_reachable(current, goal, geom)? {
        vec![current.clone(), goal.clone()]
    } else {
        vec![current.clone(), line_formation(current, line_gap), goal.clone()]
    };
    let plan = ReconfigurationPlan { steps, switch_policy };
    plan.validate(geom)?;
    Ok(plan)
}

/// Rule per ordered pair `(j, i)` for one formation epoch.
pub type EpochRules = BTreeMap<(usize, usize), Rule>;

/// Rules of the first epoch: plain selection from the shape.
pub fn initial_rules(spec: &FormationSpec, geom: &PartitionGeometry) -> Result<EpochRules> {
    ranked_pairs(spec)
        .map(|(j, i)| {
            let rule = rule_for_offset(spec.relative_offset(j, i), geom).ok_or(Error::UnrepresentableShape { j, i })?;
            Ok(((j, i), rule))
        })
        .collect()
}

/// Rules after switching from `old` to `new`.
///
/// Each pair keeps a rule that holds over both its old and new sector, so
/// the whole transit stays inside one half-plane. Among the common rules the
/// new shape's own selection wins, then the previous epoch's rule.
pub fn transition_rules(
    old: &FormationSpec,
    new: &FormationSpec,
    previous: &EpochRules,
    geom: &PartitionGeometry,
) -> Result<EpochRules> {
    ensure_isomorphic(old, new)?;
    ranked_pairs(new)
        .map(|(j, i)| {
            let a = region_of_offset(old.relative_offset(j, i), geom)?;
            let b = region_of_offset(new.relative_offset(j, i), geom)?;
            let common = common_rules(a, b);
            let preferred = rule_for_offset(new.relative_offset(j, i), geom);
            let rule = preferred
                .filter(|r| common.contains(r))
                .or_else(|| previous.get(&(j, i)).copied().filter(|r| common.contains(r)))
                .or_else(|| common.first().copied())
                .ok_or_else(|| {
                    Error::PlanningFailure(format!(
                        "vehicle {j} w.r.t. {i}: {a:?} -> {b:?} shares no rule"
                    ))
                })?;
            Ok(((j, i), rule))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub time: f64,
    pub from: String,
    pub to: String,
}

/// Discrete supervisor owning the active formation and its rules.
#[derive(Debug, Clone)]
pub struct Supervisor {
    plan: ReconfigurationPlan,
    geom: PartitionGeometry,
    index: usize,
    rules: EpochRules,
    calm_since: Option<f64>,
    events: Vec<SwitchEvent>,
}

const TIME_EPS: f64 = 1e-9;

impl Supervisor {
    pub fn new(plan: ReconfigurationPlan, geom: PartitionGeometry) -> Result<Self> {
        plan.validate(&geom)?;
        let rules = initial_rules(&plan.steps[0], &geom)?;
        Ok(Self {
            plan,
            geom,
            index: 0,
            rules,
            calm_since: None,
            events: Vec::new(),
        })
    }

    pub fn active(&self) -> &FormationSpec {
        &self.plan.steps[self.index]
    }

    pub fn active_index(&self) -> usize {
        self.index
    }

    pub fn rules(&self) -> &EpochRules {
        &self.rules
    }

    pub fn events(&self) -> &[SwitchEvent] {
        &self.events
    }

    pub fn geometry(&self) -> &PartitionGeometry {
        &self.geom
    }

    /// Constraints of vehicle `j` in the current epoch, in priority order.
    pub fn constraints_for(&self, j: usize, slack_weight: f64) -> Vec<PartitionConstraint> {
        let spec = self.active();
        spec.priority[..spec.rank(j).min(spec.len())]
            .iter()
            .filter_map(|&i| {
                self.rules.get(&(j, i)).map(|&rule| PartitionConstraint {
                    watched_vehicle: i,
                    constrained_vehicle: j,
                    rule,
                    slack_weight,
                })
            })
            .collect()
    }

    /// Advances the plan if the switch condition holds at `clock`.
    pub fn supervise(&mut self, clock: f64, errors: &[FormationError]) -> Result<Vec<SwitchEvent>> {
        let mut fired = Vec::new();
        while self.index + 1 < self.plan.steps.len() && self.should_switch(clock, errors) {
            fired.push(self.advance(clock)?);
        }
        Ok(fired)
    }

    fn should_switch(&mut self, clock: f64, errors: &[FormationError]) -> bool {
        match &self.plan.switch_policy {
            SwitchPolicy::Scheduled { times } => times.get(self.index).is_some_and(|&t| clock + TIME_EPS >= t),
            SwitchPolicy::Threshold { epsilon, dwell } => {
                let calm = errors.iter().all(|e| e.e < *epsilon);
                if !calm {
                    self.calm_since = None;
                    return false;
                }
                let since = *self.calm_since.get_or_insert(clock);
                clock - since + TIME_EPS >= *dwell
            }
        }
    }

    fn advance(&mut self, clock: f64) -> Result<SwitchEvent> {
        let old = &self.plan.steps[self.index];
        let new = &self.plan.steps[self.index + 1];
        self.rules = transition_rules(old, new, &self.rules, &self.geom)?;
        let event = SwitchEvent {
            time: clock,
            from: old.name.clone(),
            to: new.name.clone(),
        };
        self.index += 1;
        self.calm_since = None;
        self.events.push(event.clone());
        Ok(event)
    }
}

/// Worst violation of the epoch rules when every vehicle sits exactly at
/// its offset in `spec`. Non-positive means the shape respects the rules.
pub fn max_rule_value(spec: &FormationSpec, rules: &EpochRules, geom: &PartitionGeometry) -> f64 {
    rules
        .iter()
        .map(|(&(j, i), &rule)| g(rule, (0.0, 0.0), geom, spec.relative_offset(j, i)))
        .fold(f64::NEG_INFINITY, f64::max)
}
