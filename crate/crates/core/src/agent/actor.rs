//! Hybrid policy: a shared trunk, a per-user categorical head over
//! generation steps and a squashed-Gaussian head conditioned on the chosen
//! steps.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::AgentConfig;
use crate::error::{Error, Result};
use crate::neural::{orthogonal, Activation, Dense, ForwardCache, Mlp, MlpGrads, MlpSpec};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// How the step choice is made.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    Learned,
    /// Every user gets this step index.
    Fixed(usize),
}

/// Exogenous noise of one batched policy sample.
#[derive(Debug, Clone)]
pub struct ActorNoise {
    /// `(batch, users * steps)` Gumbel draws.
    pub gumbel: Array2<f64>,
    /// `(batch, continuous)` standard normal draws.
    pub gauss: Array2<f64>,
}

impl ActorNoise {
    pub fn draw<R: Rng + ?Sized>(batch: usize, discrete: usize, continuous: usize, rng: &mut R) -> Self {
        let gumbel = Array2::from_shape_fn((batch, discrete), |_| {
            let u: f64 = rng.random::<f64>().max(1e-20);
            -(-u.ln()).ln()
        });
        let gauss = Array2::from_shape_fn((batch, continuous), |_| rng.sample::<f64, _>(StandardNormal));
        Self { gumbel, gauss }
    }

    /// Zero noise: argmax steps and the Gaussian mean.
    pub fn zeros(batch: usize, discrete: usize, continuous: usize) -> Self {
        Self { gumbel: Array2::zeros((batch, discrete)), gauss: Array2::zeros((batch, continuous)) }
    }
}

/// Everything a backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ActorPass {
    /// Step index per row and user.
    pub steps: Vec<Vec<usize>>,
    /// Continuous outputs in `(0, 1)`, `(batch, continuous)`.
    pub cont: Array2<f64>,
    /// Joint log-density of the sampled action per row.
    pub log_prob: Vec<f64>,
    trunk: ForwardCache,
    head: Option<ForwardCache>,
    branch: ForwardCache,
    probs: Array2<f64>,
    relaxed: Array2<f64>,
    gumbel_temp: f64,
    gauss: Array2<f64>,
    sigma: Array2<f64>,
    log_std_tanh: Array2<f64>,
}

impl ActorPass {
    pub fn batch(&self) -> usize {
        self.steps.len()
    }
}

/// Gradients of the three actor networks.
#[derive(Debug, Clone)]
pub struct ActorGrads {
    pub trunk: MlpGrads,
    pub head: Option<MlpGrads>,
    pub branch: MlpGrads,
}

impl ActorGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.trunk.flat();
        if let Some(h) = &self.head {
            v.extend(h.flat());
        }
        v.extend(self.branch.flat());
        v
    }
}

#[derive(Debug, Clone)]
pub struct Actor {
    pub trunk: Mlp,
    /// Absent under a fixed step.
    pub head: Option<Mlp>,
    pub branch: Mlp,
    pub users: usize,
    pub num_steps: usize,
    pub continuous_per_user: usize,
    pub mode: StepMode,
    log_std_min: f64,
    log_std_max: f64,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(
        users: usize,
        num_steps: usize,
        continuous_per_user: usize,
        mode: StepMode,
        cfg: &AgentConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if users == 0 || num_steps == 0 || continuous_per_user == 0 {
            return Err(Error::InvalidConfig("actor needs users, steps and continuous outputs".into()));
        }
        if let StepMode::Fixed(i) = mode {
            if i >= num_steps {
                return Err(Error::InvalidConfig(format!("fixed step index {i} out of {num_steps}")));
            }
        }
        let state_dim = 2 * users;
        let (trunk_hidden, feat) = cfg.trunk_hidden.split_at(cfg.trunk_hidden.len() - 1);
        let feat = feat[0];
        let trunk = if trunk_hidden.is_empty() {
            Mlp::from_layers(vec![dense(feat, state_dim, Activation::Relu, 2f64.sqrt(), rng)])?
        } else {
            Mlp::new(&MlpSpec::new(state_dim, trunk_hidden, feat, Activation::Relu).with_output_gain(2f64.sqrt()), rng)?
        };
        let head = match mode {
            StepMode::Learned => Some(Mlp::from_layers(vec![dense(
                users * num_steps,
                feat,
                Activation::Linear,
                cfg.head_gain,
                rng,
            )])?),
            StepMode::Fixed(_) => None,
        };
        let n_cont = users * continuous_per_user;
        let branch = Mlp::new(
            &MlpSpec::new(feat + users * num_steps, &cfg.sensing_hidden, 2 * n_cont, Activation::Linear)
                .with_output_gain(cfg.head_gain),
            rng,
        )?;
        Ok(Self {
            trunk,
            head,
            branch,
            users,
            num_steps,
            continuous_per_user,
            mode,
            log_std_min: cfg.log_std_min,
            log_std_max: cfg.log_std_max,
        })
    }

    pub fn state_dim(&self) -> usize {
        2 * self.users
    }

    pub fn discrete_dim(&self) -> usize {
        self.users * self.num_steps
    }

    pub fn continuous_dim(&self) -> usize {
        self.users * self.continuous_per_user
    }

    /// Width of the action vector seen by the critics.
    pub fn action_dim(&self) -> usize {
        self.users + self.continuous_dim()
    }

    pub fn num_params(&self) -> usize {
        self.trunk.num_params() + self.head.as_ref().map_or(0, Mlp::num_params) + self.branch.num_params()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = self.trunk.params_flat();
        if let Some(h) = &self.head {
            v.extend(h.params_flat());
        }
        v.extend(self.branch.params_flat());
        v
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::LengthMismatch { expected: self.num_params(), found: flat.len() });
        }
        let (a, rest) = flat.split_at(self.trunk.num_params());
        self.trunk.set_params_flat(a)?;
        let rest = match &mut self.head {
            Some(h) => {
                let (b, rest) = rest.split_at(h.num_params());
                h.set_params_flat(b)?;
                rest
            }
            None => rest,
        };
        self.branch.set_params_flat(rest)
    }

    pub fn all_finite(&self) -> bool {
        self.trunk.all_finite() && self.head.as_ref().is_none_or(Mlp::all_finite) && self.branch.all_finite()
    }

    /// Normalized step index in `[0, 1]`.
    pub fn normalize_step(&self, idx: usize) -> f64 {
        if self.num_steps > 1 {
            idx as f64 / (self.num_steps - 1) as f64
        } else {
            0.0
        }
    }

    /// Critic-facing action rows: normalized steps then continuous outputs.
    pub fn action_matrix(&self, pass: &ActorPass) -> Array2<f64> {
        let k = self.users;
        let mut a = Array2::zeros((pass.batch(), self.action_dim()));
        for (r, steps) in pass.steps.iter().enumerate() {
            for (j, &idx) in steps.iter().enumerate() {
                a[(r, j)] = self.normalize_step(idx);
            }
        }
        a.slice_mut(s![.., k..]).assign(&pass.cont);
        a
    }

    /// Batched forward pass with the given noise.
    pub fn forward(&self, states: ArrayView2<f64>, noise: &ActorNoise, gumbel_temp: f64) -> Result<ActorPass> {
        let b = states.nrows();
        let (k, m, nc) = (self.users, self.num_steps, self.continuous_dim());
        if noise.gumbel.dim() != (b, k * m) || noise.gauss.dim() != (b, nc) {
            return Err(Error::ShapeMismatch("noise does not match batch".into()));
        }
        let trunk = self.trunk.forward(states)?;
        let feat = trunk.output();

        let mut steps = vec![vec![0usize; k]; b];
        let mut log_prob = vec![0.0; b];
        let mut probs = Array2::zeros((b, k * m));
        let mut relaxed = Array2::zeros((b, k * m));
        let mut onehot = Array2::zeros((b, k * m));
        let head = match (&self.head, self.mode) {
            (Some(net), StepMode::Learned) => {
                let cache = net.forward(feat.view())?;
                let logits = cache.output();
                for r in 0..b {
                    for j in 0..k {
                        let cols = j * m..(j + 1) * m;
                        let l = logits.slice(s![r, cols.clone()]);
                        let g = noise.gumbel.slice(s![r, cols.clone()]);
                        let idx = argmax((0..m).map(|i| l[i] + g[i]));
                        let lse = log_sum_exp((0..m).map(|i| l[i]));
                        let pert = log_sum_exp((0..m).map(|i| (l[i] + g[i]) / gumbel_temp));
                        for i in 0..m {
                            probs[(r, j * m + i)] = (l[i] - lse).exp();
                            relaxed[(r, j * m + i)] = ((l[i] + g[i]) / gumbel_temp - pert).exp();
                        }
                        onehot[(r, j * m + idx)] = 1.0;
                        steps[r][j] = idx;
                        log_prob[r] += l[idx] - lse;
                    }
                }
                Some(cache)
            }
            (_, StepMode::Fixed(idx)) => {
                for r in 0..b {
                    for j in 0..k {
                        onehot[(r, j * m + idx)] = 1.0;
                        steps[r][j] = idx;
                    }
                }
                None
            }
            (None, StepMode::Learned) => return Err(Error::ShapeMismatch("learned steps without a head".into())),
        };

        let branch_in = concatenate(Axis(1), &[feat.view(), onehot.view()]).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let branch = self.branch.forward(branch_in.view())?;
        let out = branch.output();
        let half = 0.5 * (self.log_std_max - self.log_std_min);
        let mut cont = Array2::zeros((b, nc));
        let mut sigma = Array2::zeros((b, nc));
        let mut log_std_tanh = Array2::zeros((b, nc));
        for r in 0..b {
            for c in 0..nc {
                let mu = out[(r, c)];
                let th = out[(r, nc + c)].tanh();
                let log_std = self.log_std_min + half * (th + 1.0);
                let sd = log_std.exp();
                let eps = noise.gauss[(r, c)];
                let u = mu + sd * eps;
                cont[(r, c)] = crate::neural::sigmoid(u);
                sigma[(r, c)] = sd;
                log_std_tanh[(r, c)] = th;
                // log d(1-d) = -softplus(-u) - softplus(u)
                log_prob[r] += -0.5 * eps * eps - log_std - HALF_LN_2PI + softplus(-u) + softplus(u);
            }
        }
        Ok(ActorPass {
            steps,
            cont,
            log_prob,
            trunk,
            head,
            branch,
            probs,
            relaxed,
            gumbel_temp,
            gauss: noise.gauss.clone(),
            sigma,
            log_std_tanh,
        })
    }

    /// Backpropagates an objective with gradients `d_action` on the critic
    /// action rows and `d_log_prob` on each row's log-density.
    ///
    /// With `straight_through` the one-hot step encoding and normalized step
    /// take the gradient of their relaxed Gumbel-softmax counterparts;
    /// without it they are treated as constants, which is the exact
    /// derivative for fixed noise.
    pub fn backward(
        &self,
        pass: &ActorPass,
        d_action: &Array2<f64>,
        d_log_prob: &[f64],
        straight_through: bool,
    ) -> Result<ActorGrads> {
        let b = pass.batch();
        let (k, m, nc) = (self.users, self.num_steps, self.continuous_dim());
        if d_action.dim() != (b, self.action_dim()) || d_log_prob.len() != b {
            return Err(Error::ShapeMismatch("actor output gradient does not match batch".into()));
        }
        let half = 0.5 * (self.log_std_max - self.log_std_min);
        let mut d_out = Array2::zeros((b, 2 * nc));
        for r in 0..b {
            let g_lp = d_log_prob[r];
            for c in 0..nc {
                let d = pass.cont[(r, c)];
                // d/du of -log(d(1-d)) is 2d - 1
                let du = d_action[(r, k + c)] * d * (1.0 - d) + g_lp * (2.0 * d - 1.0);
                d_out[(r, c)] = du;
                let d_log_std = du * pass.sigma[(r, c)] * pass.gauss[(r, c)] - g_lp;
                let th = pass.log_std_tanh[(r, c)];
                d_out[(r, nc + c)] = d_log_std * half * (1.0 - th * th);
            }
        }
        let (branch_grads, d_branch_in) = self.branch.backward(&pass.branch, &d_out)?;
        let feat_dim = self.trunk.output_dim();
        let mut d_feat = d_branch_in.slice(s![.., ..feat_dim]).to_owned();

        let head_grads = match (&self.head, &pass.head) {
            (Some(net), Some(cache)) => {
                let d_onehot = d_branch_in.slice(s![.., feat_dim..]);
                let mut d_logits = Array2::zeros((b, k * m));
                for r in 0..b {
                    for j in 0..k {
                        let base = j * m;
                        if straight_through {
                            let dz = d_action[(r, j)];
                            let dy: Vec<f64> =
                                (0..m).map(|i| d_onehot[(r, base + i)] + dz * self.normalize_step(i)).collect();
                            let inner: f64 = (0..m).map(|i| pass.relaxed[(r, base + i)] * dy[i]).sum();
                            for i in 0..m {
                                d_logits[(r, base + i)] +=
                                    pass.relaxed[(r, base + i)] * (dy[i] - inner) / pass.gumbel_temp;
                            }
                        }
                        let chosen = pass.steps[r][j];
                        for i in 0..m {
                            let ind = if i == chosen { 1.0 } else { 0.0 };
                            d_logits[(r, base + i)] += d_log_prob[r] * (ind - pass.probs[(r, base + i)]);
                        }
                    }
                }
                let (g, d_f) = net.backward(cache, &d_logits)?;
                d_feat += &d_f;
                Some(g)
            }
            _ => None,
        };
        let (trunk_grads, _) = self.trunk.backward(&pass.trunk, &d_feat)?;
        Ok(ActorGrads { trunk: trunk_grads, head: head_grads, branch: branch_grads })
    }
}

fn dense<R: Rng + ?Sized>(out: usize, inp: usize, activation: Activation, gain: f64, rng: &mut R) -> Dense {
    Dense { weight: orthogonal(out, inp, gain, rng), bias: ndarray::Array1::zeros(out), activation }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let hi = values.clone().fold(f64::NEG_INFINITY, f64::max);
    hi + values.map(|v| (v - hi).exp()).sum::<f64>().ln()
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Convenience for single-state calls.
pub fn single_row(state: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, state.len()), state).expect("contiguous slice")
}
