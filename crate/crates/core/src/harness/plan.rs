use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Episode counts and seeds of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub train_episodes: usize,
    pub iterations_per_episode: usize,
    pub eval_episodes: usize,
    pub eval_iterations: usize,
    pub seeds: Vec<u64>,
    /// Checkpoint period in episodes; `None` keeps only the final one.
    pub checkpoint_every: Option<usize>,
    /// Trailing window, in episodes, of the rolling statistics.
    pub rolling_window: usize,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentPlan {
    /// Runs that finish in minutes on one core.
    pub fn desk() -> Self {
        Self {
            train_episodes: 800,
            iterations_per_episode: 50,
            eval_episodes: 1000,
            eval_iterations: 10,
            seeds: vec![0],
            checkpoint_every: None,
            rolling_window: 100,
        }
    }

    /// The full-length schedule.
    pub fn full() -> Self {
        Self { train_episodes: 6000, eval_episodes: 10_000, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations_per_episode == 0 || self.eval_iterations == 0 || self.rolling_window == 0 {
            return Err(Error::InvalidConfig("iteration counts and window must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::InvalidConfig("checkpoint_every must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        let d = ExperimentPlan::desk();
        assert_eq!((d.train_episodes, d.iterations_per_episode, d.eval_episodes), (800, 50, 1000));
        let p = ExperimentPlan::full();
        assert_eq!((p.train_episodes, p.eval_episodes, p.eval_iterations), (6000, 10_000, 10));
        assert!(ExperimentPlan { seeds: vec![], ..d }.validate().is_err());
    }
}
