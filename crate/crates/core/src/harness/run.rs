use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{mean_std, rolling, write_jsonl, EpisodeAccumulator, EpisodeSummary, MetricsRecord};
use super::plan::ExperimentPlan;
use super::trainer::{act, Trainer};
use crate::agent::{AgentConfig, SacAgent};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::policy::PolicyKind;
use crate::scenario::{draw_positions, draw_slot};

const EVAL_STREAM: u64 = 2;

/// Hex SHA-256 of the JSON form of both configs.
pub fn config_hash(system: &SystemConfig, agent: &AgentConfig) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(system).unwrap_or_default());
    h.update(serde_json::to_vec(agent).unwrap_or_default());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Sidecar written next to each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub policy: PolicyKind,
    pub seed: u64,
    pub episodes: usize,
    pub iterations: u64,
    pub updates: u64,
    pub config_hash: String,
    pub system: SystemConfig,
    pub agent: AgentConfig,
}

/// Result of [`run_training`].
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub trainer: Trainer,
    pub episodes: Vec<EpisodeSummary>,
    /// Rolling mean and standard deviation of episode AvgCAQA.
    pub rolling_caqa: Vec<(f64, f64)>,
    pub wall_s: f64,
}

impl TrainingRun {
    /// Mean AvgCAQA over the last `n` episodes.
    pub fn final_mean_caqa(&self, n: usize) -> f64 {
        let v: Vec<f64> = tail(&self.episodes, n).iter().map(|e| e.mean_caqa).collect();
        mean_std(&v).0
    }

    /// Standard deviation of episode mean reward over the last `n` episodes.
    pub fn final_reward_std(&self, n: usize) -> f64 {
        let v: Vec<f64> = tail(&self.episodes, n).iter().map(|e| e.mean_reward).collect();
        mean_std(&v).1
    }
}

fn tail<T>(v: &[T], n: usize) -> &[T] {
    &v[v.len().saturating_sub(n)..]
}

/// Writes `checkpoint.txt` and `checkpoint.json` into `dir`.
pub fn save_checkpoint(dir: &Path, trainer: &Trainer, agent_cfg: &AgentConfig, iterations: u64) -> Result<()> {
    let Some(agent) = trainer.agent.as_ref() else {
        return Ok(());
    };
    fs::create_dir_all(dir)?;
    fs::write(dir.join("checkpoint.txt"), agent.to_checkpoint())?;
    let meta = CheckpointMeta {
        policy: trainer.policy,
        seed: trainer.seed,
        episodes: trainer.episode(),
        iterations,
        updates: agent.updates,
        config_hash: config_hash(&trainer.system, agent_cfg),
        system: trainer.system.clone(),
        agent: agent_cfg.clone(),
    };
    fs::write(dir.join("checkpoint.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Loads an agent saved by [`save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<(SacAgent, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(dir.join("checkpoint.json"))?)?;
    let text = fs::read_to_string(dir.join("checkpoint.txt"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
    let agent = SacAgent::from_checkpoint(&text, meta.agent.clone(), &mut rng)?;
    if config_hash(&meta.system, &meta.agent) != meta.config_hash {
        return Err(Error::Checkpoint("configuration hash does not match the recorded one".into()));
    }
    Ok((agent, meta))
}

/// Trains one policy for one seed.
///
/// With `out`, appends every iteration record to `metrics.jsonl`, writes
/// per-episode statistics to `episodes.csv` and saves checkpoints.
/// `on_episode` sees each finished episode.
pub fn run_training(
    plan: &ExperimentPlan,
    system: &SystemConfig,
    agent_cfg: &AgentConfig,
    policy: PolicyKind,
    seed: u64,
    out: Option<&Path>,
    mut on_episode: impl FnMut(&EpisodeSummary),
) -> Result<TrainingRun> {
    plan.validate()?;
    let start = Instant::now();
    let mut trainer = Trainer::new(system.clone(), agent_cfg.clone(), policy, seed, plan.iterations_per_episode)?;
    let mut jsonl = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(BufWriter::new(File::create(dir.join("metrics.jsonl"))?))
        }
        None => None,
    };
    let mut acc = EpisodeAccumulator::new(system.num_users);
    let mut iterations = 0u64;
    for episode in 0..plan.train_episodes {
        for _ in 0..plan.iterations_per_episode {
            let rec: MetricsRecord = trainer.step()?;
            iterations += 1;
            if let Some(w) = jsonl.as_mut() {
                write_jsonl(w, &rec)?;
            }
            acc.push(&rec);
        }
        acc.flush();
        if let Some(last) = acc.episodes.last() {
            on_episode(last);
        }
        if let (Some(dir), Some(every)) = (out, plan.checkpoint_every) {
            if (episode + 1) % every == 0 {
                save_checkpoint(dir, &trainer, agent_cfg, iterations)?;
            }
        }
    }
    let caqa: Vec<f64> = acc.episodes.iter().map(|e| e.mean_caqa).collect();
    let rolling_caqa = rolling(&caqa, plan.rolling_window);
    if let Some(dir) = out {
        if let Some(w) = jsonl.as_mut() {
            w.flush()?;
        }
        let mut csv = csv::Writer::from_path(dir.join("episodes.csv"))?;
        csv.write_record(["episode", "mean_caqa", "mean_reward", "violation_rate", "rolling_mean", "rolling_std"])?;
        for (e, (m, s)) in acc.episodes.iter().zip(&rolling_caqa) {
            csv.write_record([
                e.episode.to_string(),
                e.mean_caqa.to_string(),
                e.mean_reward.to_string(),
                e.violation_rate.to_string(),
                m.to_string(),
                s.to_string(),
            ])?;
        }
        csv.flush()?;
        save_checkpoint(dir, &trainer, agent_cfg, iterations)?;
    }
    Ok(TrainingRun { trainer, episodes: acc.episodes, rolling_caqa, wall_s: start.elapsed().as_secs_f64() })
}

/// Test-distribution statistics of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub policy: String,
    pub seed: u64,
    pub slots: usize,
    pub mean_caqa: f64,
    pub std_caqa: f64,
    pub mean_theta: f64,
    pub mean_quality: f64,
    /// Share of users below their CAQA requirement.
    pub violation_rate: f64,
    /// 10th, 50th and 90th percentile of per-user CAQA.
    pub user_caqa_quantiles: [f64; 3],
    pub budget_violations: usize,
}

/// Deterministic policy over `episodes * iterations` test slots.
pub fn run_eval(
    system: &SystemConfig,
    policy: PolicyKind,
    agent: Option<&SacAgent>,
    episodes: usize,
    iterations: usize,
    seed: u64,
) -> Result<EvalSummary> {
    system.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(EVAL_STREAM);
    let (mut slot_caqa, mut user_caqa) = (Vec::new(), Vec::new());
    let (mut theta, mut quality, mut violations, mut budget) = (0.0, 0.0, 0usize, 0usize);
    for _ in 0..episodes {
        let distances = draw_positions(system, &mut rng);
        for _ in 0..iterations {
            let scenario = draw_slot(system, &distances, &mut rng)?;
            let step = act(policy, agent, &scenario, system, None)?;
            let out = &step.outcome;
            slot_caqa.push(out.avg_caqa);
            user_caqa.extend(out.users.iter().map(|u| u.omega));
            theta += out.mean_theta();
            quality += out.mean_quality();
            violations += out.caqa_violations();
            budget += usize::from(!out.energy_ok());
        }
    }
    let slots = slot_caqa.len();
    if slots == 0 {
        return Err(Error::InvalidConfig("evaluation needs at least one slot".into()));
    }
    let (mean_caqa, std_caqa) = mean_std(&slot_caqa);
    user_caqa.sort_by(f64::total_cmp);
    let q = |p: f64| user_caqa[((user_caqa.len() - 1) as f64 * p).round() as usize];
    Ok(EvalSummary {
        policy: policy.to_string(),
        seed,
        slots,
        mean_caqa,
        std_caqa,
        mean_theta: theta / slots as f64,
        mean_quality: quality / slots as f64,
        violation_rate: violations as f64 / user_caqa.len() as f64,
        user_caqa_quantiles: [q(0.1), q(0.5), q(0.9)],
        budget_violations: budget,
    })
}

/// Swept system parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    NumUsers,
    EMax,
    /// The fixed step of fixed-step policies.
    Step,
    ServerFlops,
    TMax,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "num-users" | "k" => SweepAxis::NumUsers,
            "e-max" => SweepAxis::EMax,
            "step" | "z" => SweepAxis::Step,
            "server-flops" | "f" => SweepAxis::ServerFlops,
            "t-max" => SweepAxis::TMax,
            _ => return Err(Error::InvalidConfig(format!("unknown sweep axis `{s}`"))),
        })
    }
}

impl SweepAxis {
    fn apply(self, system: &SystemConfig, policy: PolicyKind, value: f64) -> Result<(SystemConfig, PolicyKind)> {
        let mut s = system.clone();
        let mut p = policy;
        match self {
            SweepAxis::NumUsers => s.num_users = value as usize,
            SweepAxis::EMax => s.e_max_j = value,
            SweepAxis::ServerFlops => s.server_flops = value,
            SweepAxis::TMax => s.t_max_s = value,
            SweepAxis::Step => {
                if let PolicyKind::SaqaFg { .. } = policy {
                    p = PolicyKind::SaqaFg { z: value as u32 };
                }
            }
        }
        s.validate()?;
        Ok((s, p))
    }
}

/// One sweep row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub policy: String,
    pub seed: u64,
    pub mean_caqa: f64,
    pub mean_theta: f64,
    pub mean_quality: f64,
    pub violation_rate: f64,
}

/// Evaluates every policy at every sweep point and seed. Learned policies
/// are trained afresh per point with the plan's training schedule.
pub fn run_sweep(
    plan: &ExperimentPlan,
    system: &SystemConfig,
    agent_cfg: &AgentConfig,
    axis: SweepAxis,
    values: &[f64],
    policies: &[PolicyKind],
    mut on_row: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    let mut rows = Vec::new();
    for &value in values {
        for &policy in policies {
            let (sys, pol) = axis.apply(system, policy, value)?;
            for &seed in &plan.seeds {
                let trained = if pol.is_learned() {
                    Some(run_training(plan, &sys, agent_cfg, pol, seed, None, |_| {})?.trainer)
                } else {
                    None
                };
                let agent = trained.as_ref().and_then(|t| t.agent.as_ref());
                let e = run_eval(&sys, pol, agent, plan.eval_episodes, plan.eval_iterations, seed)?;
                let row = SweepRow {
                    axis,
                    value,
                    policy: pol.to_string(),
                    seed,
                    mean_caqa: e.mean_caqa,
                    mean_theta: e.mean_theta,
                    mean_quality: e.mean_quality,
                    violation_rate: e.violation_rate,
                };
                on_row(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
