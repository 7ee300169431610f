use serde::{Deserialize, Serialize};

/// Rectangle half-extents used for the overlap check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Footprint {
    pub half_length: f64,
    pub half_width: f64,
}

impl Default for Footprint {
    fn default() -> Self {
        Self {
            half_length: 1.5,
            half_width: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Plant step and trace sampling period, s.
    pub tick: f64,
    /// Replanning period, s. Must be a whole number of ticks.
    pub replanning_interval: f64,
    /// Age a plan must reach before other agents can read it, s.
    pub comm_delay: f64,
    pub duration: f64,
    pub seed: u64,
    pub footprint: Footprint,
    /// Standard deviation of additive per-tick plant noise in `[s, r, v, θ, k]`.
    pub plant_noise: [f64; 5],
    /// Largest integration step used by the plant, s.
    pub plant_step: f64,
    /// Sector depth tolerated before the audit reports a protected-region entry.
    pub audit_slack: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tick: 0.064,
            replanning_interval: 0.256,
            comm_delay: 0.256,
            duration: 40.0,
            seed: 0,
            footprint: Footprint::default(),
            plant_noise: [0.0; 5],
            plant_step: 0.016,
            audit_slack: 0.5,
        }
    }
}

impl SimConfig {
    /// Ticks per replanning interval, if the interval is a whole multiple.
    pub fn ticks_per_replan(&self) -> Option<usize> {
        let ratio = self.replanning_interval / self.tick;
        let n = ratio.round();
        ((ratio - n).abs() < 1e-9 && n >= 1.0).then_some(n as usize)
    }

    /// Number of plant ticks covering `duration`.
    pub fn tick_count(&self) -> usize {
        (self.duration / self.tick + 1e-9).floor().max(0.0) as usize
    }

    pub fn validate(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut check = |field: &str, ok: bool, reason: String| {
            if !ok {
                out.push((field.to_string(), reason));
            }
        };
        let positive = |v: f64| v > 0.0 && v.is_finite();
        check("tick", positive(self.tick), format!("must be positive, got {}", self.tick));
        check(
            "replanning_interval",
            positive(self.replanning_interval) && self.ticks_per_replan().is_some(),
            format!(
                "must be a positive multiple of the tick {}, got {}",
                self.tick, self.replanning_interval
            ),
        );
        check(
            "comm_delay",
            self.comm_delay >= 0.0 && self.comm_delay.is_finite(),
            format!("must be non-negative, got {}", self.comm_delay),
        );
        check(
            "duration",
            self.duration >= 0.0 && self.duration.is_finite(),
            format!("must be non-negative, got {}", self.duration),
        );
        check(
            "footprint",
            positive(self.footprint.half_length) && positive(self.footprint.half_width),
            "half extents must be positive".into(),
        );
        check(
            "plant_noise",
            self.plant_noise.iter().all(|v| *v >= 0.0 && v.is_finite()),
            "standard deviations must be non-negative".into(),
        );
        check(
            "plant_step",
            positive(self.plant_step),
            format!("must be positive, got {}", self.plant_step),
        );
        check(
            "audit_slack",
            self.audit_slack >= 0.0 && self.audit_slack.is_finite(),
            format!("must be non-negative, got {}", self.audit_slack),
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        let c = SimConfig::default();
        assert_eq!(c.ticks_per_replan(), Some(4));
        assert!(c.validate().is_empty());
        assert_eq!(c.tick_count(), 625);
    }

    #[test]
    fn interval_must_be_tick_multiple() {
        let c = SimConfig {
            replanning_interval: 0.3,
            ..SimConfig::default()
        };
        assert_eq!(c.ticks_per_replan(), None);
        assert!(c.validate().iter().any(|(f, _)| f == "replanning_interval"));
    }

    #[test]
    fn negative_delay_rejected() {
        let c = SimConfig {
            comm_delay: -0.1,
            ..SimConfig::default()
        };
        assert!(c.validate().iter().any(|(f, _)| f == "comm_delay"));
    }
}
