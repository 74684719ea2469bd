use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{MetricsRecord, SCHEMA_VERSION};
use crate::agent::{lp_guided_reward, single_row, AgentConfig, ReplayBuffer, SacAgent, Transition};
use crate::baselines::Decision;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::policy::PolicyKind;
use crate::scenario::{draw_positions, draw_slot, Scenario};
use crate::service::{evaluate, ServiceOutcome};

const ENV_STREAM: u64 = 0;
const AGENT_STREAM: u64 = 1;

/// Environment rng for `seed`.
pub fn env_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ENV_STREAM);
    rng
}

/// Agent rng for `seed`, independent of the environment stream.
pub fn agent_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(AGENT_STREAM);
    rng
}

/// One iteration's decision, outcome and reward.
#[derive(Debug, Clone)]
pub struct Step {
    pub decision: Decision,
    pub outcome: ServiceOutcome,
    pub reward: f64,
    /// Critic-facing action vector, empty for fixed policies.
    pub action: Vec<f64>,
}

/// Applies a policy, learned or not, to one scenario.
pub fn act(
    policy: PolicyKind,
    agent: Option<&SacAgent>,
    scenario: &Scenario,
    config: &SystemConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Step> {
    let (decision, action) = match agent {
        Some(agent) => {
            let state = scenario.state();
            let pass = match rng {
                Some(rng) => agent.sample(single_row(&state), rng)?,
                None => agent.act_deterministic(single_row(&state))?,
            };
            let steps: Vec<u32> = pass.steps[0].iter().map(|&i| config.z_min + i as u32).collect();
            let cont = pass.cont.row(0).to_vec();
            let action = agent.actor.action_matrix(&pass).row(0).to_vec();
            (policy.realize(scenario, &steps, &cont, config)?, action)
        }
        None if !policy.is_learned() => (policy.realize(scenario, &[], &[], config)?, Vec::new()),
        None => return Err(Error::InvalidConfig(format!("{policy} needs a trained agent"))),
    };
    let outcome = evaluate(scenario, &decision.alloc, config)?;
    let reward = lp_guided_reward(&outcome);
    Ok(Step { decision, outcome, reward, action })
}

/// Episode/iteration loop around one agent.
///
/// User positions are redrawn at the start of every episode; priorities,
/// fading and requirements at every iteration.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub system: SystemConfig,
    pub policy: PolicyKind,
    pub agent: Option<SacAgent>,
    pub buffer: ReplayBuffer,
    pub seed: u64,
    pub iterations_per_episode: usize,
    env_rng: ChaCha8Rng,
    agent_rng: ChaCha8Rng,
    current: Scenario,
    episode: usize,
    iteration: usize,
    distances: Vec<f64>,
}

impl Trainer {
    pub fn new(
        system: SystemConfig,
        agent_cfg: AgentConfig,
        policy: PolicyKind,
        seed: u64,
        iterations_per_episode: usize,
    ) -> Result<Self> {
        system.validate()?;
        if iterations_per_episode == 0 {
            return Err(Error::InvalidConfig("iterations_per_episode must be positive".into()));
        }
        let mut env = env_rng(seed);
        let mut arng = agent_rng(seed);
        let k = system.num_users;
        let agent = if policy.is_learned() {
            Some(SacAgent::new(
                k,
                system.num_steps(),
                policy.continuous_per_user(),
                policy.step_mode(&system)?,
                agent_cfg.clone(),
                &mut arng,
            )?)
        } else {
            agent_cfg.validate()?;
            None
        };
        let action_dim = agent.as_ref().map_or(0, |a| a.actor.action_dim());
        let buffer = ReplayBuffer::new(agent_cfg.buffer_capacity, 2 * k, action_dim);
        let distances = draw_positions(&system, &mut env);
        let current = draw_slot(&system, &distances, &mut env)?;
        Ok(Self {
            system,
            policy,
            agent,
            buffer,
            seed,
            iterations_per_episode,
            env_rng: env,
            agent_rng: arng,
            current,
            episode: 0,
            iteration: 0,
            distances,
        })
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn current_scenario(&self) -> &Scenario {
        &self.current
    }

    /// Runs one iteration and at most one learner update.
    pub fn step(&mut self) -> Result<MetricsRecord> {
        let step = act(self.policy, self.agent.as_ref(), &self.current, &self.system, Some(&mut self.agent_rng))?;
        if !step.reward.is_finite() {
            return Err(Error::NonFinite(format!("reward at episode {} iteration {}", self.episode, self.iteration)));
        }
        let (episode, iteration) = (self.episode, self.iteration);
        self.iteration += 1;
        if self.iteration == self.iterations_per_episode {
            self.iteration = 0;
            self.episode += 1;
            self.distances = draw_positions(&self.system, &mut self.env_rng);
        }
        let next = draw_slot(&self.system, &self.distances, &mut self.env_rng)?;

        let mut update = None;
        if let Some(agent) = self.agent.as_mut() {
            self.buffer.push(&Transition {
                state: self.current.state(),
                action: step.action.clone(),
                reward: step.reward,
                next_state: next.state(),
            });
            if self.buffer.len() >= agent.cfg.min_fill {
                let batch = self.buffer.sample(agent.cfg.batch_size, &mut self.agent_rng);
                update = Some(agent.update(&batch, &mut self.agent_rng)?);
            }
        }
        self.current = next;
        Ok(MetricsRecord::from_step(SCHEMA_VERSION, self.policy, self.seed, episode, iteration, &step, update))
    }
}
