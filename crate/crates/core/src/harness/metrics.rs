use std::io::Write;

use serde::{Deserialize, Serialize};

use super::trainer::Step;
use crate::agent::UpdateMetrics;
use crate::error::Result;
use crate::policy::PolicyKind;

pub const SCHEMA_VERSION: u32 = 1;

/// Per-iteration training record, one JSON line each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub schema: u32,
    pub policy: String,
    pub seed: u64,
    pub episode: usize,
    pub iteration: usize,
    pub avg_caqa: f64,
    pub reward: f64,
    /// Users failing C1..C6.
    pub violations: [usize; 6],
    pub flagged: usize,
    pub projected: bool,
    pub update: Option<UpdateMetrics>,
}

impl MetricsRecord {
    pub fn from_step(
        schema: u32,
        policy: PolicyKind,
        seed: u64,
        episode: usize,
        iteration: usize,
        step: &Step,
        update: Option<UpdateMetrics>,
    ) -> Self {
        let mut violations = [0; 6];
        for u in &step.outcome.users {
            for (slot, ok) in violations
                .iter_mut()
                .zip([u.c1_time, u.c2_energy, u.c3_sensing, u.c4_steps, u.c5_caqa, u.c6_display])
            {
                *slot += usize::from(!ok);
            }
        }
        Self {
            schema,
            policy: policy.to_string(),
            seed,
            episode,
            iteration,
            avg_caqa: step.outcome.avg_caqa,
            reward: step.reward,
            violations,
            flagged: step.decision.flagged,
            projected: step.decision.projected,
            update,
        }
    }
}

pub fn write_jsonl<W: Write>(out: &mut W, record: &MetricsRecord) -> Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Mean and standard deviation of each episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub mean_caqa: f64,
    pub mean_reward: f64,
    pub violation_rate: f64,
}

/// Folds iteration records into per-episode summaries.
#[derive(Debug, Clone, Default)]
pub struct EpisodeAccumulator {
    current: Option<(usize, f64, f64, usize, usize)>,
    users: usize,
    pub episodes: Vec<EpisodeSummary>,
}

impl EpisodeAccumulator {
    pub fn new(users: usize) -> Self {
        Self { current: None, users, episodes: Vec::new() }
    }

    pub fn push(&mut self, r: &MetricsRecord) {
        if let Some((ep, ..)) = self.current {
            if ep != r.episode {
                self.flush();
            }
        }
        let c = self.current.get_or_insert((r.episode, 0.0, 0.0, 0, 0));
        c.1 += r.avg_caqa;
        c.2 += r.reward;
        c.3 += 1;
        c.4 += r.violations[4];
    }

    pub fn flush(&mut self) {
        if let Some((episode, caqa, reward, n, v)) = self.current.take() {
            let n_f = n as f64;
            self.episodes.push(EpisodeSummary {
                episode,
                mean_caqa: caqa / n_f,
                mean_reward: reward / n_f,
                violation_rate: v as f64 / (n * self.users.max(1)) as f64,
            });
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Rolling mean and standard deviation over trailing windows.
pub fn rolling(values: &[f64], window: usize) -> Vec<(f64, f64)> {
    (0..values.len()).map(|i| mean_std(&values[(i + 1).saturating_sub(window.max(1))..=i])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - 1.25f64.sqrt()).abs() < 1e-15);
        let r = rolling(&[1.0, 3.0, 5.0], 2);
        assert_eq!(r[0], (1.0, 0.0));
        assert_eq!(r[2], (4.0, 1.0));
    }
}
