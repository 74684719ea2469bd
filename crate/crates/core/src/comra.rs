//! Communication energy allocation once sensing energy and generation steps
//! are fixed.
//!
//! With `E_s` and `z` fixed, every user's CAQA is linear in its
//! communication energy between a minimum (the CAQA requirement) and a
//! maximum (service deadline or full display resolution). The problem is a
//! separable LP with one budget row, solved exactly by ranking users on
//! CAQA gained per joule and filling greedily (RCE).

pub mod oracle;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::service::{self, Timeline};

/// Bounds and marginal value of one user's communication energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComraUser {
    pub theta: f64,
    pub gain: f64,
    /// Energy reaching the CAQA requirement; `INFINITY` when unreachable.
    pub e_min: f64,
    /// Energy cap from the deadline and the display resolution.
    pub e_max: f64,
    /// CAQA gained per joule on `[e_min, e_max]`.
    pub lambda: f64,
}

impl ComraUser {
    pub fn eligible(&self) -> bool {
        self.e_min.is_finite() && self.e_max >= self.e_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComraInstance {
    pub users: Vec<ComraUser>,
    /// Energy left after sensing, `E_max - sum(E_s)`. May be negative.
    pub e_r: f64,
}

impl ComraInstance {
    /// Mean CAQA of an allocation. On the allocation box CAQA is exactly
    /// `lambda * E_c`.
    pub fn objective(&self, e_c: &[f64]) -> f64 {
        let k = self.users.len().max(1) as f64;
        self.users.iter().zip(e_c).map(|(u, &e)| u.lambda * e).sum::<f64>() / k
    }
}

/// Smallest communication energy with CAQA equal to `omega_min`.
pub fn min_comm_energy(theta: f64, gain: f64, omega_min: f64, config: &SystemConfig) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Infeasible("zero content accuracy".into()));
    }
    if omega_min > theta {
        return Err(Error::Infeasible(format!(
            "requirement {omega_min} exceeds content accuracy {theta}"
        )));
    }
    if omega_min <= 0.0 {
        return Ok(0.0);
    }
    Ok(omega_min * display_energy(gain, config) / theta)
}

/// Energy that delivers exactly `D_c` pixels.
pub fn display_energy(gain: f64, config: &SystemConfig) -> f64 {
    config.p_comm_w * config.display_bits() / service::transmission_rate(gain, config)
}

/// Tighter of the deadline and display caps given the time already spent
/// before transmission (`T_arr + T_que + T_gen + T_wait`), floored at zero.
pub fn max_comm_energy(elapsed_s: f64, gain: f64, config: &SystemConfig) -> f64 {
    let deadline = config.p_comm_w * (config.t_max_s - elapsed_s);
    deadline.min(display_energy(gain, config)).max(0.0)
}

pub fn priority_metric(theta: f64, gain: f64, config: &SystemConfig) -> f64 {
    theta * service::transmission_rate(gain, config) / (config.display_bits() * config.p_comm_w)
}

/// True content accuracy of every user under `(E_s, z)`.
pub fn content_accuracies(sensing_j: &[f64], steps: &[u32], config: &SystemConfig) -> Result<Vec<f64>> {
    sensing_j
        .iter()
        .zip(steps)
        .map(|(&e, &z)| service::content_accuracy(e, z, config))
        .collect()
}

/// Assembles the ComRA instance. `thetas` is the content accuracy the
/// allocator believes in, which need not be the true one.
pub fn build_instance(
    scenario: &Scenario,
    sensing_j: &[f64],
    steps: &[u32],
    thetas: &[f64],
    config: &SystemConfig,
) -> ComraInstance {
    let tl: Timeline = service::timeline(sensing_j, steps, config);
    let users = scenario
        .users
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let theta = thetas[k];
            ComraUser {
                theta,
                gain: u.gain,
                e_min: min_comm_energy(theta, u.gain, u.omega_min, config).unwrap_or(f64::INFINITY),
                e_max: max_comm_energy(tl.comm_start(k), u.gain, config),
                lambda: priority_metric(theta, u.gain, config),
            }
        })
        .collect();
    ComraInstance { users, e_r: config.e_max_j - sensing_j.iter().sum::<f64>() }
}

/// Ranking-based communication energy allocation.
///
/// Eligible users are ranked by descending `lambda` (ties keep index
/// order). If the budget cannot cover every minimum, minimums are granted
/// whole in rank order until the next one no longer fits. Otherwise every
/// minimum is granted and the remainder is poured in rank order up to each
/// user's cap.
pub fn rce_allocate(instance: &ComraInstance) -> Vec<f64> {
    let users = &instance.users;
    let mut e_c = vec![0.0; users.len()];
    if !(instance.e_r > 0.0) {
        return e_c;
    }
    // (lambda, index, e_min, e_max), contiguous so the sort stays in cache
    let mut ranked: Vec<(f64, usize, f64, f64)> = users
        .iter()
        .enumerate()
        .filter(|(_, u)| u.eligible())
        .map(|(k, u)| (u.lambda, k, u.e_min, u.e_max))
        .collect();
    if ranked.is_empty() {
        return e_c;
    }
    ranked.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let required: f64 = ranked.iter().map(|r| r.2).sum();
    if instance.e_r <= required {
        let mut left = instance.e_r;
        for &(_, k, e_min, _) in &ranked {
            if e_min > left {
                break;
            }
            e_c[k] = e_min;
            left -= e_min;
        }
    } else {
        let mut left = instance.e_r - required;
        for &(_, k, e_min, e_max) in &ranked {
            let top_up = if left > 0.0 { (e_max - e_min).min(left) } else { 0.0 };
            e_c[k] = e_min + top_up;
            left -= top_up;
        }
    }
    e_c
}

/// Local optimality certificate for an allocation.
///
/// Fails if the allocation leaves its box or the budget, or if moving
/// `step` joules from a funded user to another funded user with strictly
/// higher `lambda` stays feasible. When every eligible user is funded,
/// unused budget counts as a donor with zero marginal value.
pub fn greedy_exchange_check(instance: &ComraInstance, e_c: &[f64], step: f64) -> bool {
    const TOL: f64 = 1e-12;
    let users = &instance.users;
    if e_c.len() != users.len() {
        return false;
    }
    let spent: f64 = e_c.iter().sum();
    if spent > instance.e_r.max(0.0) + TOL {
        return false;
    }
    let mut funded = vec![false; users.len()];
    for (k, (u, &e)) in users.iter().zip(e_c).enumerate() {
        if e == 0.0 && !(u.eligible() && u.e_min == 0.0) {
            continue;
        }
        if !u.eligible() || e < u.e_min - TOL || e > u.e_max + TOL {
            return false;
        }
        funded[k] = true;
    }
    let can_give = |k: usize| funded[k] && e_c[k] - step >= users[k].e_min - TOL;
    let can_take = |k: usize| funded[k] && e_c[k] + step <= users[k].e_max + TOL;

    for donor in (0..users.len()).filter(|&k| can_give(k)) {
        for taker in (0..users.len()).filter(|&k| k != donor && can_take(k)) {
            if users[taker].lambda > users[donor].lambda {
                return false;
            }
        }
    }
    let all_funded = users.iter().enumerate().all(|(k, u)| !u.eligible() || funded[k]);
    if all_funded && instance.e_r - spent >= step && (0..users.len()).any(|k| can_take(k) && users[k].lambda > 0.0) {
        return false;
    }
    true
}
