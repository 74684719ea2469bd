use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learner hyperparameters. Network widths, learning rates, buffer sizes
/// and the soft update rate follow the reference setup; the remaining
/// values are not pinned down there and are ordinary SAC choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub temperature_lr: f64,
    /// Target network averaging rate.
    pub soft_update: f64,
    pub gamma: f64,
    pub initial_temperature: f64,
    /// Entropy target; `None` picks half the hybrid action entropy scale.
    pub target_entropy: Option<f64>,
    pub gumbel_temperature: f64,
    pub gumbel_decay: f64,
    pub gumbel_floor: f64,
    pub buffer_capacity: usize,
    pub min_fill: usize,
    pub batch_size: usize,
    pub trunk_hidden: Vec<usize>,
    pub sensing_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Orthogonal gain of the policy output layers.
    pub head_gain: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            temperature_lr: 3e-4,
            soft_update: 0.005,
            gamma: 0.9,
            initial_temperature: 0.2,
            target_entropy: None,
            gumbel_temperature: 1.0,
            gumbel_decay: 0.9995,
            gumbel_floor: 0.3,
            buffer_capacity: 50_000,
            min_fill: 5_000,
            batch_size: 256,
            trunk_hidden: vec![256, 128],
            sensing_hidden: vec![64],
            critic_hidden: vec![256, 128],
            head_gain: 0.01,
            log_std_min: -5.0,
            log_std_max: 2.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr), ("temperature_lr", self.temperature_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        if !(self.soft_update > 0.0 && self.soft_update < 1.0) {
            return bad(format!("soft_update must lie in (0, 1), got {}", self.soft_update));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.initial_temperature > 0.0) {
            return bad("initial_temperature must be positive".into());
        }
        if !(self.gumbel_temperature > 0.0 && self.gumbel_floor > 0.0 && self.gumbel_decay > 0.0 && self.gumbel_decay <= 1.0) {
            return bad("Gumbel temperature schedule must be positive with decay in (0, 1]".into());
        }
        if self.batch_size == 0 || self.min_fill < self.batch_size || self.buffer_capacity < self.min_fill {
            return bad(format!(
                "need 0 < batch_size <= min_fill <= buffer_capacity, got {} / {} / {}",
                self.batch_size, self.min_fill, self.buffer_capacity
            ));
        }
        if self.trunk_hidden.is_empty() || self.sensing_hidden.is_empty() || self.critic_hidden.is_empty() {
            return bad("every network needs at least one hidden layer".into());
        }
        if !(self.log_std_min < self.log_std_max) {
            return bad("log_std_min must be below log_std_max".into());
        }
        Ok(())
    }

    /// Heuristic entropy target for `k` users, each with `continuous`
    /// continuous outputs and `steps` step choices.
    pub fn entropy_target(&self, k: usize, continuous: usize, steps: usize) -> f64 {
        let k = k as f64;
        self.target_entropy
            .unwrap_or_else(|| -0.5 * (k * continuous as f64 + k * (steps as f64).ln()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = AgentConfig::default();
        c.validate().unwrap();
        assert!((c.entropy_target(10, 1, 6) + 0.5 * (10.0 + 10.0 * 6f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(AgentConfig { gamma: 1.0, ..AgentConfig::default() }.validate().is_err());
        assert!(AgentConfig { soft_update: 0.0, ..AgentConfig::default() }.validate().is_err());
        assert!(AgentConfig { min_fill: 10, ..AgentConfig::default() }.validate().is_err());
        assert!(AgentConfig { actor_lr: -1.0, ..AgentConfig::default() }.validate().is_err());
    }
}
