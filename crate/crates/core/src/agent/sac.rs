use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::actor::{Actor, ActorNoise, ActorPass, StepMode};
use super::buffer::Batch;
use super::config::AgentConfig;
use crate::error::{Error, Result};
use crate::neural::{read_mlp, write_mlp, Activation, Adam, Mlp, MlpSpec};

/// Losses and temperatures of one update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub critic_loss: [f64; 2],
    pub actor_loss: f64,
    pub temperature_loss: f64,
    pub temperature: f64,
    pub gumbel_temperature: f64,
    pub mean_log_prob: f64,
}

/// Soft actor-critic over the hybrid action.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub cfg: AgentConfig,
    pub actor: Actor,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    actor_opt: [Adam; 3],
    critic_opt: [Adam; 2],
    log_temp: f64,
    temp_opt: Adam,
    pub gumbel_temperature: f64,
    pub target_entropy: f64,
    pub updates: u64,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(
        users: usize,
        num_steps: usize,
        continuous_per_user: usize,
        mode: StepMode,
        cfg: AgentConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let actor = Actor::new(users, num_steps, continuous_per_user, mode, &cfg, rng)?;
        let critic_in = actor.state_dim() + actor.action_dim();
        let spec = MlpSpec::new(critic_in, &cfg.critic_hidden, 1, Activation::Linear);
        let critics = [Mlp::new(&spec, rng)?, Mlp::new(&spec, rng)?];
        let targets = critics.clone();
        let actor_opt = [
            Adam::for_mlp(&actor.trunk, cfg.actor_lr),
            Adam::new(actor.head.as_ref().map_or(0, Mlp::num_params), cfg.actor_lr),
            Adam::for_mlp(&actor.branch, cfg.actor_lr),
        ];
        let critic_opt = [Adam::for_mlp(&critics[0], cfg.critic_lr), Adam::for_mlp(&critics[1], cfg.critic_lr)];
        let entropy_steps = if mode == StepMode::Learned { num_steps } else { 1 };
        let target_entropy = cfg.entropy_target(users, continuous_per_user, entropy_steps);
        Ok(Self {
            log_temp: cfg.initial_temperature.ln(),
            temp_opt: Adam::new(1, cfg.temperature_lr),
            gumbel_temperature: cfg.gumbel_temperature,
            cfg,
            actor,
            critics,
            targets,
            actor_opt,
            critic_opt,
            target_entropy,
            updates: 0,
        })
    }

    pub fn temperature(&self) -> f64 {
        self.log_temp.exp()
    }

    /// Stochastic actions for a batch of states.
    pub fn sample<R: Rng + ?Sized>(&self, states: ArrayView2<f64>, rng: &mut R) -> Result<ActorPass> {
        let noise = ActorNoise::draw(states.nrows(), self.actor.discrete_dim(), self.actor.continuous_dim(), rng);
        self.actor.forward(states, &noise, self.gumbel_temperature)
    }

    /// Most likely steps and the Gaussian mean.
    pub fn act_deterministic(&self, states: ArrayView2<f64>) -> Result<ActorPass> {
        let noise = ActorNoise::zeros(states.nrows(), self.actor.discrete_dim(), self.actor.continuous_dim());
        self.actor.forward(states, &noise, self.gumbel_temperature)
    }

    fn critic_input(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
        concatenate(Axis(1), &[states, actions]).map_err(|e| Error::ShapeMismatch(e.to_string()))
    }

    /// TD targets `r + gamma (min Q' - temperature * log pi)`.
    pub fn td_targets<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<Vec<f64>> {
        let next = self.sample(batch.next_states.view(), rng)?;
        let a = self.actor.action_matrix(&next);
        let x = Self::critic_input(batch.next_states.view(), a.view())?;
        let q1 = self.targets[0].predict(x.view())?;
        let q2 = self.targets[1].predict(x.view())?;
        let temp = self.temperature();
        Ok((0..batch.rewards.len())
            .map(|i| batch.rewards[i] + self.cfg.gamma * (q1[(i, 0)].min(q2[(i, 0)]) - temp * next.log_prob[i]))
            .collect())
    }

    /// One gradient step on both critics; returns their mean squared errors.
    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<[f64; 2]> {
        let y = self.td_targets(batch, rng)?;
        let x = Self::critic_input(batch.states.view(), batch.actions.view())?;
        let n = y.len() as f64;
        let mut losses = [0.0; 2];
        for (j, slot) in losses.iter_mut().enumerate() {
            let cache = self.critics[j].forward(x.view())?;
            let q = cache.output();
            let mut d = Array2::zeros((y.len(), 1));
            let mut loss = 0.0;
            for i in 0..y.len() {
                let err = q[(i, 0)] - y[i];
                loss += err * err;
                d[(i, 0)] = 2.0 * err / n;
            }
            let (grads, _) = self.critics[j].backward(&cache, &d)?;
            self.critic_opt[j].step_mlp(&mut self.critics[j], &grads)?;
            *slot = loss / n;
        }
        Ok(losses)
    }

    /// One policy step; returns the loss and the batch log-densities.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, states: ArrayView2<f64>, rng: &mut R) -> Result<(f64, Vec<f64>)> {
        let b = states.nrows();
        let pass = self.sample(states, rng)?;
        let a = self.actor.action_matrix(&pass);
        let x = Self::critic_input(states, a.view())?;
        let c1 = self.critics[0].forward(x.view())?;
        let c2 = self.critics[1].forward(x.view())?;
        let temp = self.temperature();
        let n = b as f64;
        let mut d1 = Array2::zeros((b, 1));
        let mut d2 = Array2::zeros((b, 1));
        let mut loss = 0.0;
        for i in 0..b {
            let (q1, q2) = (c1.output()[(i, 0)], c2.output()[(i, 0)]);
            if q1 <= q2 {
                d1[(i, 0)] = -1.0 / n;
            } else {
                d2[(i, 0)] = -1.0 / n;
            }
            loss += temp * pass.log_prob[i] - q1.min(q2);
        }
        let dx = self.critics[0].backward_input(&c1, &d1)? + self.critics[1].backward_input(&c2, &d2)?;
        let d_action = dx.slice(ndarray::s![.., self.actor.state_dim()..]).to_owned();
        let d_lp = vec![temp / n; b];
        let grads = self.actor.backward(&pass, &d_action, &d_lp, true)?;
        self.actor_opt[0].step_mlp(&mut self.actor.trunk, &grads.trunk)?;
        if let (Some(head), Some(g)) = (self.actor.head.as_mut(), grads.head.as_ref()) {
            self.actor_opt[1].step_mlp(head, g)?;
        }
        self.actor_opt[2].step_mlp(&mut self.actor.branch, &grads.branch)?;
        Ok((loss / n, pass.log_prob))
    }

    /// Adjusts the entropy temperature toward the target entropy.
    pub fn temperature_update(&mut self, log_probs: &[f64]) -> Result<f64> {
        let temp = self.temperature();
        let gap = log_probs.iter().map(|lp| lp + self.target_entropy).sum::<f64>() / log_probs.len() as f64;
        let loss = -temp * gap;
        let mut p = [self.log_temp];
        self.temp_opt.step_slice(&mut p, &[-temp * gap])?;
        self.log_temp = p[0];
        Ok(loss)
    }

    pub fn soft_update(&mut self) -> Result<()> {
        for j in 0..2 {
            let (t, c) = (&mut self.targets[j], &self.critics[j]);
            t.soft_update_from(c, self.cfg.soft_update)?;
        }
        Ok(())
    }

    /// Critic, actor and temperature steps, then target averaging.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<UpdateMetrics> {
        let critic_loss = self.critic_update(batch, rng)?;
        let (actor_loss, log_probs) = self.actor_update(batch.states.view(), rng)?;
        let temperature_loss = self.temperature_update(&log_probs)?;
        self.soft_update()?;
        self.gumbel_temperature = (self.gumbel_temperature * self.cfg.gumbel_decay).max(self.cfg.gumbel_floor);
        self.updates += 1;
        if !(self.actor.all_finite() && self.critics.iter().all(Mlp::all_finite)) {
            return Err(Error::NonFinite(format!("parameters after update {}", self.updates)));
        }
        Ok(UpdateMetrics {
            critic_loss,
            actor_loss,
            temperature_loss,
            temperature: self.temperature(),
            gumbel_temperature: self.gumbel_temperature,
            mean_log_prob: log_probs.iter().sum::<f64>() / log_probs.len() as f64,
        })
    }

    /// Text checkpoint of every network plus the scalar state.
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!(
            "sac {} {} {} {} {:e} {:e} {}\n",
            self.actor.users,
            self.actor.num_steps,
            self.actor.continuous_per_user,
            match self.actor.mode {
                StepMode::Learned => "learned".to_string(),
                StepMode::Fixed(i) => format!("fixed:{i}"),
            },
            self.log_temp,
            self.gumbel_temperature,
            self.updates
        );
        write_mlp(&mut out, "trunk", &self.actor.trunk);
        if let Some(h) = &self.actor.head {
            write_mlp(&mut out, "head", h);
        }
        write_mlp(&mut out, "branch", &self.actor.branch);
        for (i, c) in self.critics.iter().enumerate() {
            write_mlp(&mut out, &format!("critic{i}"), c);
        }
        for (i, c) in self.targets.iter().enumerate() {
            write_mlp(&mut out, &format!("target{i}"), c);
        }
        out
    }

    /// Restores networks and scalars; optimizer moments restart from zero.
    pub fn from_checkpoint<R: Rng + ?Sized>(text: &str, cfg: AgentConfig, rng: &mut R) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty checkpoint"))?.split_whitespace().collect();
        if header.len() != 8 || header[0] != "sac" {
            return Err(bad("missing sac header"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header integer"));
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad("bad header float"));
        let mode = match header[4] {
            "learned" => StepMode::Learned,
            m => StepMode::Fixed(num(m.strip_prefix("fixed:").ok_or_else(|| bad("bad step mode"))?)?),
        };
        let mut agent = Self::new(num(header[1])?, num(header[2])?, num(header[3])?, mode, cfg, rng)?;
        agent.log_temp = float(header[5])?;
        agent.gumbel_temperature = float(header[6])?;
        agent.updates = header[7].parse().map_err(|_| bad("bad update count"))?;
        let expected: Vec<&str> = match mode {
            StepMode::Learned => vec!["trunk", "head", "branch", "critic0", "critic1", "target0", "target1"],
            StepMode::Fixed(_) => vec!["trunk", "branch", "critic0", "critic1", "target0", "target1"],
        };
        for name in expected {
            let (found, net) = read_mlp(&mut lines)?;
            if found != name {
                return Err(Error::Checkpoint(format!("expected {name}, found {found}")));
            }
            let slot = match name {
                "trunk" => &mut agent.actor.trunk,
                "head" => agent.actor.head.as_mut().ok_or_else(|| bad("head without learned steps"))?,
                "branch" => &mut agent.actor.branch,
                "critic0" => &mut agent.critics[0],
                "critic1" => &mut agent.critics[1],
                "target0" => &mut agent.targets[0],
                _ => &mut agent.targets[1],
            };
            if slot.num_params() != net.num_params() || slot.layers.len() != net.layers.len() {
                return Err(Error::Checkpoint(format!("{name} shape differs from the configured network")));
            }
            *slot = net;
        }
        Ok(agent)
    }
}
