//! Analytic service pipeline: sensing, FCFS generation, OFDM delivery and
//! the CAQA objective with its feasibility flags.

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Slack on CAQA comparisons. Allocations built to hit `omega_min` exactly
/// land within a few ulps of it.
pub const CAQA_TOL: f64 = 1e-9;
/// Slack on time and energy budget comparisons.
pub const BUDGET_TOL: f64 = 1e-12;

pub fn sensing_cycles(e_s: f64, config: &SystemConfig) -> f64 {
    e_s / config.cycle_energy()
}

/// `xi - varpi * n^-tau`, clamped at zero. Zero cycles means no sensing.
pub fn sensing_accuracy(n: f64, config: &SystemConfig) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    (config.xi - config.varpi * n.powf(-config.tau)).max(0.0)
}

/// Sensing cycles needed to reach `target` accuracy.
pub fn inverse_sensing_accuracy(target: f64, config: &SystemConfig) -> Result<f64> {
    if target <= 0.0 {
        return Ok(0.0);
    }
    if target >= config.xi {
        return Err(Error::Infeasible(format!(
            "sensing accuracy {target} is not below the ceiling {}",
            config.xi
        )));
    }
    Ok((config.varpi / (config.xi - target)).powf(1.0 / config.tau))
}

/// Average error of generation after `z` denoising steps.
pub fn aeg(z: u32, config: &SystemConfig) -> Result<f64> {
    if z < config.z_min {
        return Err(Error::StepOutOfRange { z, min: config.z_min, max: config.z_max });
    }
    Ok(config.eps_fwd * (-config.mu * f64::from(z - config.z_min)).exp())
}

pub fn generation_time(z: u32, config: &SystemConfig) -> f64 {
    config.flops_per_step * f64::from(z) / config.server_flops
}

/// Per-user phase durations before transmission starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub arrival: Vec<f64>,
    pub queue: Vec<f64>,
    pub generation: Vec<f64>,
    pub wait: Vec<f64>,
}

impl Timeline {
    /// Time at which user `k` may start transmitting.
    pub fn comm_start(&self, k: usize) -> f64 {
        self.arrival[k] + self.queue[k] + self.generation[k] + self.wait[k]
    }
}

/// Closed-form FCFS timeline. Users are served in index (sensing) order.
pub fn timeline(e_s: &[f64], z: &[u32], config: &SystemConfig) -> Timeline {
    let k = e_s.len();
    let mut arrival = Vec::with_capacity(k);
    let mut acc = 0.0;
    for &e in e_s {
        acc += sensing_cycles(e, config) * config.sensing_cycle_s;
        arrival.push(acc);
    }
    let generation: Vec<f64> = z.iter().map(|&z| generation_time(z, config)).collect();
    let mut queue = vec![0.0; k];
    for i in 1..k {
        queue[i] = (arrival[i - 1] + queue[i - 1] + generation[i - 1] - arrival[i]).max(0.0);
    }
    let sensing_end = arrival.last().copied().unwrap_or(0.0);
    let wait = (0..k)
        .map(|i| (sensing_end - (arrival[i] + queue[i] + generation[i])).max(0.0))
        .collect();
    Timeline { arrival, queue, generation, wait }
}

/// Link SNR on a `B/K` subchannel, `g * P_c * K / (delta^2 * B)`.
pub fn snr(gain: f64, config: &SystemConfig) -> f64 {
    gain * config.p_comm_w * config.num_users as f64 / (config.noise_psd_w_per_hz * config.bandwidth_hz)
}

pub fn transmission_rate(gain: f64, config: &SystemConfig) -> f64 {
    config.subchannel_hz() * (1.0 + snr(gain, config)).log2()
}

/// `(1 - eps(z)) * Upsilon(n(E_s))`.
pub fn content_accuracy(e_s: f64, z: u32, config: &SystemConfig) -> Result<f64> {
    Ok((1.0 - aeg(z, config)?) * sensing_accuracy(sensing_cycles(e_s, config), config))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Caqa {
    pub theta: f64,
    pub pixels: f64,
    pub omega: f64,
}

pub fn caqa(e_s: f64, z: u32, e_c: f64, gain: f64, config: &SystemConfig) -> Result<Caqa> {
    let theta = content_accuracy(e_s, z, config)?;
    let t_comm = e_c / config.p_comm_w;
    let pixels = transmission_rate(gain, config) * t_comm / config.bits_per_pixel;
    let quality = (pixels / config.display_capacity_px).min(1.0);
    Ok(Caqa { theta, pixels, omega: theta * quality })
}

/// Per-user resource decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Sensing energy per user (J).
    pub sensing_j: Vec<f64>,
    /// Generation steps per user.
    pub steps: Vec<u32>,
    /// Communication energy per user (J).
    pub comm_j: Vec<f64>,
}

impl Allocation {
    pub fn zeros(k: usize, z: u32) -> Self {
        Self { sensing_j: vec![0.0; k], steps: vec![z; k], comm_j: vec![0.0; k] }
    }

    pub fn total_energy(&self) -> f64 {
        self.sensing_j.iter().sum::<f64>() + self.comm_j.iter().sum::<f64>()
    }
}

/// Flat per-user record of one evaluated slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserOutcome {
    pub n_cycles: f64,
    pub t_arr: f64,
    pub t_que: f64,
    pub t_gen: f64,
    pub t_wait: f64,
    pub t_comm: f64,
    pub t_total: f64,
    pub upsilon: f64,
    pub eps: f64,
    pub theta: f64,
    pub rate_bps: f64,
    pub pixels: f64,
    pub quality: f64,
    pub omega: f64,
    pub omega_min: f64,
    pub c1_time: bool,
    pub c2_energy: bool,
    pub c3_sensing: bool,
    pub c4_steps: bool,
    pub c5_caqa: bool,
    pub c6_display: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceOutcome {
    pub users: Vec<UserOutcome>,
    pub avg_caqa: f64,
    pub total_energy_j: f64,
}

impl ServiceOutcome {
    pub fn energy_ok(&self) -> bool {
        self.users.first().is_none_or(|u| u.c2_energy)
    }

    /// Users whose CAQA falls short of their requirement.
    pub fn caqa_violations(&self) -> usize {
        self.users.iter().filter(|u| !u.c5_caqa).count()
    }

    pub fn mean_theta(&self) -> f64 {
        mean(self.users.iter().map(|u| u.theta))
    }

    pub fn mean_quality(&self) -> f64 {
        mean(self.users.iter().map(|u| u.quality))
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

/// Evaluates an allocation on a scenario: timeline, CAQA and constraint
/// flags C1..C6.
pub fn evaluate(scenario: &Scenario, alloc: &Allocation, config: &SystemConfig) -> Result<ServiceOutcome> {
    let k = scenario.num_users();
    for len in [alloc.sensing_j.len(), alloc.steps.len(), alloc.comm_j.len()] {
        if len != k {
            return Err(Error::LengthMismatch { expected: k, found: len });
        }
    }
    let tl = timeline(&alloc.sensing_j, &alloc.steps, config);
    let total_energy_j = alloc.total_energy();
    let energy_ok = total_energy_j <= config.e_max_j + BUDGET_TOL;

    let mut users = Vec::with_capacity(k);
    for (i, user) in scenario.users.iter().enumerate() {
        let (e_s, z, e_c) = (alloc.sensing_j[i], alloc.steps[i], alloc.comm_j[i]);
        let n_cycles = sensing_cycles(e_s, config);
        let upsilon = sensing_accuracy(n_cycles, config);
        let eps = aeg(z, config)?;
        let theta = (1.0 - eps) * upsilon;
        let rate_bps = transmission_rate(user.gain, config);
        let t_comm = e_c / config.p_comm_w;
        let pixels = rate_bps * t_comm / config.bits_per_pixel;
        let quality = (pixels / config.display_capacity_px).min(1.0);
        let omega = theta * quality;
        let t_total = tl.arrival[i] + tl.queue[i] + tl.generation[i] + tl.wait[i] + t_comm;
        users.push(UserOutcome {
            n_cycles,
            t_arr: tl.arrival[i],
            t_que: tl.queue[i],
            t_gen: tl.generation[i],
            t_wait: tl.wait[i],
            t_comm,
            t_total,
            upsilon,
            eps,
            theta,
            rate_bps,
            pixels,
            quality,
            omega,
            omega_min: user.omega_min,
            c1_time: t_total <= config.t_max_s + BUDGET_TOL,
            c2_energy: energy_ok,
            c3_sensing: (0.0..=config.e_s_max_j + BUDGET_TOL).contains(&e_s),
            c4_steps: (config.z_min..=config.z_max).contains(&z),
            c5_caqa: omega >= user.omega_min - CAQA_TOL,
            c6_display: pixels >= 0.0 && pixels <= config.display_capacity_px * (1.0 + CAQA_TOL),
        });
    }
    let avg_caqa = mean(users.iter().map(|u| u.omega));
    Ok(ServiceOutcome { users, avg_caqa, total_energy_j })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::UserScenario;

    fn cfg() -> SystemConfig {
        SystemConfig::default()
    }

    fn scenario(gains: &[f64], omega_min: &[f64]) -> Scenario {
        Scenario {
            users: gains
                .iter()
                .zip(omega_min)
                .enumerate()
                .map(|(i, (&gain, &omega_min))| UserScenario {
                    distance_m: 100.0,
                    gain,
                    log_gain: 0.0,
                    omega_min,
                    priority_rank: i + 1,
                })
                .collect(),
        }
    }

    #[test]
    fn sensing_cycle_arithmetic() {
        let c = cfg();
        assert_eq!(sensing_cycles(0.0, &c), 0.0);
        assert!((sensing_cycles(0.06, &c) - 1000.0).abs() < 1e-9);
        assert!((sensing_cycles(0.1, &c) - 5000.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn sensing_accuracy_values() {
        let c = cfg();
        assert_eq!(sensing_accuracy(0.0, &c), 0.0);
        // varpi * n^-tau >= xi below n = (2 / 0.95)^(1/0.6) ~ 3.46
        assert_eq!(sensing_accuracy(3.0, &c), 0.0);
        let expected = 0.95 - 2.0 * 1000f64.powf(-0.6);
        assert_eq!(sensing_accuracy(1000.0, &c), expected);
        assert!((expected - 0.918_302).abs() < 1e-6);
        assert!((sensing_accuracy(1e15, &c) - 0.95).abs() < 1e-8);
    }

    #[test]
    fn inverse_accuracy_edges() {
        let c = cfg();
        let n = inverse_sensing_accuracy(c.xi - c.varpi, &c).unwrap();
        assert_eq!(n, 0.0, "xi - varpi < 0 so no sensing is needed");
        let c2 = SystemConfig { varpi: 0.5, ..cfg() };
        let n = inverse_sensing_accuracy(c2.xi - c2.varpi, &c2).unwrap();
        assert!((n - 1.0).abs() < 1e-12);
        assert!(matches!(inverse_sensing_accuracy(0.95, &c), Err(Error::Infeasible(_))));
        assert!(inverse_sensing_accuracy(0.99, &c).is_err());
        assert_eq!(inverse_sensing_accuracy(-0.1, &c).unwrap(), 0.0);
    }

    #[test]
    fn aeg_values() {
        let c = cfg();
        assert_eq!(aeg(5, &c).unwrap(), 0.03);
        assert!((aeg(10, &c).unwrap() - 0.03 * (-1f64).exp()).abs() < 1e-15);
        assert!((aeg(10, &c).unwrap() - 0.011_036).abs() < 1e-6);
        assert!(aeg(200, &c).unwrap() < 1e-18);
        assert!(matches!(aeg(4, &c), Err(Error::StepOutOfRange { .. })));
    }

    #[test]
    fn generation_times() {
        let c = cfg();
        assert_eq!(generation_time(10, &c), 0.1);
        let slow = SystemConfig { server_flops: 16e12, ..cfg() };
        assert_eq!(generation_time(5, &slow), 0.0625);
        assert_eq!(generation_time(0, &c), 0.0);
    }

    #[test]
    fn single_user_timeline() {
        let c = cfg();
        // 0.006 J -> 100 cycles -> 6 ms of sensing, generation 50 ms
        let tl = timeline(&[0.006], &[5], &c);
        assert_eq!(tl.queue, vec![0.0]);
        assert_eq!(tl.wait, vec![0.0]);
        assert!((tl.arrival[0] - 0.006).abs() < 1e-15);
    }

    #[test]
    fn two_user_queue_by_hand() {
        let c = cfg();
        // user 1 arrives at 6 ms and generates until 56 ms; user 2 arrives at 12 ms
        let tl = timeline(&[0.006, 0.006], &[5, 5], &c);
        let gen_end_1 = tl.arrival[0] + 0.05;
        assert!((tl.queue[1] - (gen_end_1 - tl.arrival[1])).abs() < 1e-15);
        assert!(tl.queue[1] > 0.0);
        assert!((tl.queue[1] - 0.044).abs() < 1e-12);
    }

    #[test]
    fn fast_server_has_no_queue() {
        let c = SystemConfig { server_flops: 1e30, ..cfg() };
        let tl = timeline(&[0.01; 6], &[5; 6], &c);
        assert!(tl.queue.iter().all(|&q| q == 0.0));
    }

    #[test]
    fn link_budget() {
        let c = cfg();
        let g = 10f64.powf(-9.05);
        // independent link budget: SNR = g P_c / (N0 * B/K)
        let snr_ref = g * 1.5 / (10f64.powf(-20.4) * 1e7);
        assert!((snr(g, &c) / snr_ref - 1.0).abs() < 1e-12);
        // values from an independent Python evaluation of the link budget
        assert!((snr_ref - 33_580.817).abs() < 1e-2);
        let rate = transmission_rate(g, &c);
        assert!((rate - 1.503_539_3e8).abs() < 10.0, "rate {rate}");
        assert!(transmission_rate(1e-30, &c) < 1e-3);
    }

    #[test]
    fn caqa_saturation_and_zero() {
        let c = cfg();
        let g = 10f64.powf(-9.05);
        let full = caqa(0.05, 8, 1.0, g, &c).unwrap();
        assert!(full.pixels >= c.display_capacity_px);
        assert_eq!(full.omega, full.theta);
        let none = caqa(0.05, 8, 0.0, g, &c).unwrap();
        assert_eq!(none.omega, 0.0);
    }

    #[test]
    fn all_zero_allocation_violates_everyone() {
        let c = SystemConfig { num_users: 3, ..cfg() };
        let s = scenario(&[1e-10; 3], &[0.4, 0.42, 0.44]);
        let out = evaluate(&s, &Allocation::zeros(3, 5), &c).unwrap();
        assert_eq!(out.avg_caqa, 0.0);
        assert_eq!(out.caqa_violations(), 3);
    }

    #[test]
    fn evaluate_rejects_length_mismatch() {
        let c = SystemConfig { num_users: 2, ..cfg() };
        let s = scenario(&[1e-10; 2], &[0.4, 0.4]);
        let alloc = Allocation { sensing_j: vec![0.01], steps: vec![5, 5], comm_j: vec![0.0, 0.0] };
        assert!(matches!(evaluate(&s, &alloc, &c), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn energy_flag_respects_budget() {
        let c = SystemConfig { num_users: 2, ..cfg() };
        let s = scenario(&[1e-10; 2], &[0.4, 0.4]);
        let over = Allocation { sensing_j: vec![0.1, 0.1], steps: vec![5, 5], comm_j: vec![0.4, 0.4 + 1e-9] };
        assert!(!evaluate(&s, &over, &c).unwrap().energy_ok());
        let at = Allocation { sensing_j: vec![0.1, 0.1], steps: vec![5, 5], comm_j: vec![0.4, 0.4] };
        assert!(evaluate(&s, &at, &c).unwrap().energy_ok());
    }

    #[test]
    fn time_components_sum_exactly() {
        let c = SystemConfig { num_users: 4, ..cfg() };
        let s = scenario(&[1e-10, 3e-11, 2e-10, 5e-12], &[0.4; 4]);
        let alloc = Allocation {
            sensing_j: vec![0.02, 0.09, 0.001, 0.05],
            steps: vec![10, 5, 7, 9],
            comm_j: vec![0.1, 0.0, 0.05, 0.2],
        };
        let out = evaluate(&s, &alloc, &c).unwrap();
        for u in &out.users {
            assert_eq!(u.t_total, u.t_arr + u.t_que + u.t_gen + u.t_wait + u.t_comm);
            assert!(u.t_que >= 0.0 && u.t_wait >= 0.0);
            // integral pixel counts would be off by up to a whole pixel
            let bits = u.rate_bps * u.t_comm;
            assert!((u.pixels * c.bits_per_pixel - bits).abs() <= 4.0 * f64::EPSILON * bits);
            assert_eq!(u.omega, u.theta * u.quality);
            assert!(u.quality <= 1.0);
        }
    }
}
