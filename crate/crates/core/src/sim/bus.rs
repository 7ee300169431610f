//! Delayed delivery of planned trajectories between agents.

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Published {
    pub publish_time: f64,
    pub sequence: u64,
    pub plan: Trajectory,
}

impl Published {
    pub fn age(&self, now: f64) -> f64 {
        now - self.publish_time
    }
}

/// Per-vehicle plan history. A plan becomes visible `delay` seconds after
/// it is published.
#[derive(Debug, Clone)]
pub struct MessageBus {
    delay: f64,
    next_sequence: u64,
    plans: Vec<Vec<Published>>,
}

impl MessageBus {
    pub fn new(vehicles: usize, delay: f64) -> Self {
        Self {
            delay,
            next_sequence: 0,
            plans: vec![Vec::new(); vehicles],
        }
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn publish(&mut self, vehicle: usize, time: f64, plan: Trajectory) -> Result<()> {
        if plan.vehicle_id != vehicle {
            return Err(Error::InvalidTrajectory(format!(
                "plan of vehicle {} published as vehicle {vehicle}",
                plan.vehicle_id
            )));
        }
        let slot = self
            .plans
            .get_mut(vehicle)
            .ok_or_else(|| Error::InvalidTrajectory(format!("unknown vehicle {vehicle}")))?;
        slot.push(Published {
            publish_time: time,
            sequence: self.next_sequence,
            plan,
        });
        self.next_sequence += 1;
        Ok(())
    }

    /// Newest plan of `vehicle` published no later than `now - delay`;
    /// among equal publish times the later sequence number wins.
    pub fn fetch(&self, vehicle: usize, now: f64) -> Option<&Published> {
        let cutoff = now - self.delay + TIME_EPS;
        self.plans.get(vehicle)?.iter().filter(|p| p.publish_time <= cutoff).max_by(|a, b| {
            a.publish_time
                .total_cmp(&b.publish_time)
                .then(a.sequence.cmp(&b.sequence))
        })
    }

    /// Drops plans that can no longer be the newest eligible one at `now`.
    pub fn prune(&mut self, now: f64) {
        let cutoff = now - self.delay + TIME_EPS;
        for slot in &mut self.plans {
            if let Some(keep) = slot.iter().rposition(|p| p.publish_time <= cutoff) {
                slot.drain(..keep);
            }
        }
    }
}
