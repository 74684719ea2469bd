//! Soft actor-critic learner with a hybrid step/energy action.

pub mod actor;
mod buffer;
mod config;
mod filter;
mod sac;

pub use actor::{single_row, Actor, ActorGrads, ActorNoise, ActorPass, StepMode};
pub use buffer::{Batch, ReplayBuffer, Transition};
pub use config::AgentConfig;
pub use filter::{action_filter, lp_guided_reward, sensing_floor, FilteredSensing};
pub use sac::{SacAgent, UpdateMetrics};
