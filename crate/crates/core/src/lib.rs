//! Sensing, generation and communication resource allocation for
//! ISAC-driven AIGC services.
//!
//! The crate models a single ISAC device that senses users' poses, has a
//! generative server render personalised content, and delivers it over
//! OFDM. Service quality is scored by CAQA, the product of content accuracy
//! and display-capped resolution. Allocation is split into a learned part
//! (sensing energy and generation steps, [`agent`]) and an exact part
//! (communication energy, [`comra`]).

// negated comparisons are used deliberately so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod baselines;
pub mod comra;
pub mod config;
pub mod error;
pub mod harness;
pub mod neural;
pub mod policy;
pub mod scenario;
pub mod service;

pub use config::SystemConfig;
pub use error::{Error, Result};
