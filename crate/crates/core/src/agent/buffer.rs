use ndarray::Array2;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One experience record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Normalized step choices followed by the continuous outputs.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// A sampled minibatch, one row per transition.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
}

/// Fixed-capacity FIFO store of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    /// Slot the next push overwrites once full.
    head: usize,
    len: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            state_dim,
            action_dim,
            states: vec![0.0; capacity * state_dim],
            actions: vec![0.0; capacity * action_dim],
            rewards: vec![0.0; capacity],
            next_states: vec![0.0; capacity * state_dim],
            head: 0,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends, evicting the oldest record when full.
    pub fn push(&mut self, t: &Transition) {
        assert_eq!(t.state.len(), self.state_dim);
        assert_eq!(t.next_state.len(), self.state_dim);
        assert_eq!(t.action.len(), self.action_dim);
        let i = self.head;
        self.states[i * self.state_dim..(i + 1) * self.state_dim].copy_from_slice(&t.state);
        self.next_states[i * self.state_dim..(i + 1) * self.state_dim].copy_from_slice(&t.next_state);
        self.actions[i * self.action_dim..(i + 1) * self.action_dim].copy_from_slice(&t.action);
        self.rewards[i] = t.reward;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Record `i` counted from the oldest.
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let oldest = if self.len == self.capacity { self.head } else { 0 };
        let j = (oldest + i) % self.capacity;
        Some(Transition {
            state: self.states[j * self.state_dim..(j + 1) * self.state_dim].to_vec(),
            action: self.actions[j * self.action_dim..(j + 1) * self.action_dim].to_vec(),
            reward: self.rewards[j],
            next_state: self.next_states[j * self.state_dim..(j + 1) * self.state_dim].to_vec(),
        })
    }

    /// Uniform sample of distinct records.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Batch {
        assert!(batch <= self.len, "batch {batch} larger than buffer {}", self.len);
        let picks = index::sample(rng, self.len, batch);
        let (sd, ad) = (self.state_dim, self.action_dim);
        let mut states = Array2::zeros((batch, sd));
        let mut next_states = Array2::zeros((batch, sd));
        let mut actions = Array2::zeros((batch, ad));
        let mut rewards = Vec::with_capacity(batch);
        for (row, j) in picks.iter().enumerate() {
            states.row_mut(row).as_slice_mut().unwrap().copy_from_slice(&self.states[j * sd..(j + 1) * sd]);
            next_states.row_mut(row).as_slice_mut().unwrap().copy_from_slice(&self.next_states[j * sd..(j + 1) * sd]);
            actions.row_mut(row).as_slice_mut().unwrap().copy_from_slice(&self.actions[j * ad..(j + 1) * ad]);
            rewards.push(self.rewards[j]);
        }
        Batch { states, actions, rewards, next_states }
    }
}
