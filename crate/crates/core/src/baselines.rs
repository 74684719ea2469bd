//! Allocation mappings for the learned policy family and the reference
//! policies.

use crate::agent::action_filter;
use crate::comra::{build_instance, content_accuracies, rce_allocate};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::service::{aeg, evaluate, Allocation, ServiceOutcome};

/// A realized allocation with bookkeeping from the mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub alloc: Allocation,
    /// Users whose sensing floor was unreachable.
    pub flagged: usize,
    /// Whether sensing had to be scaled down to fit the total budget.
    pub projected: bool,
}

/// `floor((z_min + z_max) / 2)`.
pub fn middle_step(config: &SystemConfig) -> u32 {
    (config.z_min + config.z_max) / 2
}

/// Scales sensing energies down proportionally when they exceed the total
/// budget. Returns whether scaling happened.
pub fn fit_sensing_budget(sensing_j: &mut [f64], config: &SystemConfig) -> bool {
    let total: f64 = sensing_j.iter().sum();
    if total <= config.e_max_j {
        return false;
    }
    let scale = config.e_max_j / total;
    sensing_j.iter_mut().for_each(|e| *e *= scale);
    // rounding may leave the sum a hair above the budget
    let mut over = sensing_j.iter().sum::<f64>() - config.e_max_j;
    for e in sensing_j.iter_mut() {
        if over <= 0.0 {
            break;
        }
        let cut = over.min(*e);
        *e -= cut;
        over -= cut;
    }
    true
}

/// Communication energy from RCE with the given believed accuracies.
pub fn rce_communication(
    scenario: &Scenario,
    sensing_j: &[f64],
    steps: &[u32],
    thetas: &[f64],
    config: &SystemConfig,
) -> Vec<f64> {
    rce_allocate(&build_instance(scenario, sensing_j, steps, thetas, config))
}

fn check_lengths(k: usize, lens: &[usize]) -> Result<()> {
    match lens.iter().find(|&&l| l != k) {
        Some(&found) => Err(Error::LengthMismatch { expected: k, found }),
        None => Ok(()),
    }
}

fn check_steps(steps: &[u32], config: &SystemConfig) -> Result<()> {
    match steps.iter().find(|&&z| z < config.z_min || z > config.z_max) {
        Some(&z) => Err(Error::StepOutOfRange { z, min: config.z_min, max: config.z_max }),
        None => Ok(()),
    }
}

/// Filtered sensing under assumed generation errors `eps`, then budget fit.
fn filtered_sensing(scenario: &Scenario, d: &[f64], eps: &[f64], config: &SystemConfig) -> (Vec<f64>, usize, bool) {
    let mut flagged = 0;
    let mut sensing: Vec<f64> = scenario
        .users
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let f = action_filter(d[k], u.omega_min, eps[k], config);
            flagged += usize::from(f.flagged());
            f.energy_j
        })
        .collect();
    let projected = fit_sensing_budget(&mut sensing, config);
    (sensing, flagged, projected)
}

/// Filtered sensing, chosen steps, RCE communication.
pub fn lpdrl_f_allocation(scenario: &Scenario, steps: &[u32], d: &[f64], config: &SystemConfig) -> Result<Decision> {
    let k = scenario.num_users();
    check_lengths(k, &[steps.len(), d.len()])?;
    check_steps(steps, config)?;
    let eps = steps.iter().map(|&z| aeg(z, config)).collect::<Result<Vec<_>>>()?;
    let (sensing, flagged, projected) = filtered_sensing(scenario, d, &eps, config);
    let thetas = content_accuracies(&sensing, steps, config)?;
    let comm_j = rce_communication(scenario, &sensing, steps, &thetas, config);
    Ok(Decision { alloc: Allocation { sensing_j: sensing, steps: steps.to_vec(), comm_j }, flagged, projected })
}

/// Raw sensing `d * E_s_max` without the floor, then RCE.
pub fn lpdrl_allocation(scenario: &Scenario, steps: &[u32], d: &[f64], config: &SystemConfig) -> Result<Decision> {
    let k = scenario.num_users();
    check_lengths(k, &[steps.len(), d.len()])?;
    check_steps(steps, config)?;
    let mut sensing: Vec<f64> = d.iter().map(|&v| v.clamp(0.0, 1.0) * config.e_s_max_j).collect();
    let projected = fit_sensing_budget(&mut sensing, config);
    let thetas = content_accuracies(&sensing, steps, config)?;
    let comm_j = rce_communication(scenario, &sensing, steps, &thetas, config);
    Ok(Decision { alloc: Allocation { sensing_j: sensing, steps: steps.to_vec(), comm_j }, flagged: 0, projected })
}

/// Fixed step, with filter and RCE both assuming error-free generation.
pub fn saqa_fg_allocation(scenario: &Scenario, z: u32, d: &[f64], config: &SystemConfig) -> Result<Decision> {
    let k = scenario.num_users();
    check_lengths(k, &[d.len()])?;
    check_steps(&[z], config)?;
    let steps = vec![z; k];
    let (sensing, flagged, projected) = filtered_sensing(scenario, d, &vec![0.0; k], config);
    let perfect = SystemConfig { eps_fwd: 0.0, ..config.clone() };
    let thetas = content_accuracies(&sensing, &steps, &perfect)?;
    let comm_j = rce_communication(scenario, &sensing, &steps, &thetas, config);
    Ok(Decision { alloc: Allocation { sensing_j: sensing, steps, comm_j }, flagged, projected })
}

/// Filtered sensing and chosen steps; communication split by the learned
/// fractions `c` of the residual budget, each capped by its time and
/// display limit.
pub fn jdrl_f_allocation(
    scenario: &Scenario,
    steps: &[u32],
    d: &[f64],
    c: &[f64],
    config: &SystemConfig,
) -> Result<Decision> {
    let k = scenario.num_users();
    check_lengths(k, &[steps.len(), d.len(), c.len()])?;
    check_steps(steps, config)?;
    let eps = steps.iter().map(|&z| aeg(z, config)).collect::<Result<Vec<_>>>()?;
    let (sensing, flagged, projected) = filtered_sensing(scenario, d, &eps, config);
    let thetas = content_accuracies(&sensing, steps, config)?;
    let inst = build_instance(scenario, &sensing, steps, &thetas, config);
    let e_r = inst.e_r.max(0.0);
    let weights: Vec<f64> = c.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let total: f64 = weights.iter().sum();
    let comm_j = if total > 0.0 {
        weights.iter().zip(&inst.users).map(|(w, u)| (w * e_r / total).min(u.e_max.max(0.0))).collect()
    } else {
        vec![0.0; k]
    };
    Ok(Decision { alloc: Allocation { sensing_j: sensing, steps: steps.to_vec(), comm_j }, flagged, projected })
}

/// Fixed-proportion sensing and the middle step, with RCE communication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgqFsg {
    pub alpha: f64,
    /// Rank users as if content were perfectly accurate.
    pub assume_perfect_accuracy: bool,
}

impl CgqFsg {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(Self { alpha, assume_perfect_accuracy: true })
    }
}

pub fn cgq_fsg(scenario: &Scenario, params: &CgqFsg, config: &SystemConfig) -> Result<Decision> {
    let k = scenario.num_users();
    let per_user = (params.alpha * config.e_max_j / k as f64).min(config.e_s_max_j);
    let sensing = vec![per_user; k];
    let steps = vec![middle_step(config); k];
    let thetas =
        if params.assume_perfect_accuracy { vec![1.0; k] } else { content_accuracies(&sensing, &steps, config)? };
    let comm_j = rce_communication(scenario, &sensing, &steps, &thetas, config);
    Ok(Decision { alloc: Allocation { sensing_j: sensing, steps, comm_j }, flagged: 0, projected: false })
}

/// Levels of the common filter position searched by [`oracle_fixed_step`].
pub const ORACLE_LEVELS: usize = 21;

/// Fixed step with the best common filter position for this scenario,
/// found by search over an evenly spaced grid, and RCE communication.
pub fn oracle_fixed_step(scenario: &Scenario, z: u32, config: &SystemConfig) -> Result<(Decision, ServiceOutcome)> {
    let k = scenario.num_users();
    let mut best: Option<(Decision, ServiceOutcome)> = None;
    for i in 0..ORACLE_LEVELS {
        let d = vec![i as f64 / (ORACLE_LEVELS - 1) as f64; k];
        let decision = lpdrl_f_allocation(scenario, &vec![z; k], &d, config)?;
        let outcome = evaluate(scenario, &decision.alloc, config)?;
        if best.as_ref().is_none_or(|(_, b)| outcome.avg_caqa > b.avg_caqa) {
            best = Some((decision, outcome));
        }
    }
    best.ok_or_else(|| Error::InvalidConfig("no oracle levels".into()))
}
