//! Self-checks runnable from the command line.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::agent::{Actor, ActorNoise, AgentConfig, SacAgent, StepMode};
use crate::comra::oracle::{grid_increment, grid_optimum, lp_dual_optimum, physical_instance, synthetic_instance};
use crate::comra::{greedy_exchange_check, rce_allocate};
use crate::config::SystemConfig;
use crate::error::Result;
use crate::neural::gradcheck::{check_mlp, directional_fd, dot, relative_error, unit_direction, GradCheckReport, FD_STEP};
use crate::service::{generation_time, sensing_cycles, timeline, Timeline};

/// Energy levels per user of the brute-force grid.
pub const GRID_LEVELS: usize = 400;
/// Relative tolerance of the gradient checks.
pub const GRAD_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct RceReport {
    pub instances: usize,
    /// Instances with at least one feasible grid point.
    pub grid_evaluated: usize,
    /// Instances where RCE fell more than one grid increment below the grid.
    pub grid_failures: usize,
    pub exchange_failures: usize,
    /// Instances where RCE and the dual optimum differ beyond rounding.
    pub dual_failures: usize,
    pub worst_dual_gap: f64,
    pub wall_s: f64,
}

impl RceReport {
    pub fn passed(&self) -> bool {
        self.grid_evaluated == self.instances
            && self.grid_failures == 0
            && self.exchange_failures == 0 && self.dual_failures == 0
    }
}

/// Compares RCE with the grid, exchange and dual certificates on random
/// physical instances with 2 to 5 users.
pub fn verify_rce(instances: usize, seed: u64) -> Result<RceReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = RceReport {
        instances,
        grid_evaluated: 0,
        grid_failures: 0,
        exchange_failures: 0,
        dual_failures: 0,
        worst_dual_gap: 0.0,
        wall_s: 0.0,
    };
    for i in 0..instances {
        let inst = physical_instance(2 + i % 4, &mut rng)?;
        let e_c = rce_allocate(&inst);
        let value = inst.objective(&e_c);
        if let Some(grid) = grid_optimum(&inst, GRID_LEVELS) {
            report.grid_evaluated += 1;
            if value < grid - grid_increment(&inst, GRID_LEVELS) - 1e-12 {
                report.grid_failures += 1;
            }
        }
        let step = 1e-3 * inst.users.iter().map(|u| u.e_max).fold(0.0, f64::max).max(1e-9);
        if !greedy_exchange_check(&inst, &e_c, step) {
            report.exchange_failures += 1;
        }
        if let Some(dual) = lp_dual_optimum(&inst) {
            let gap = (dual - value).abs();
            report.worst_dual_gap = report.worst_dual_gap.max(gap);
            if gap > 1e-9 * dual.abs().max(1.0) {
                report.dual_failures += 1;
            }
        }
    }
    report.wall_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Median RCE runtime at `large` users over the median at `small` users.
pub fn rce_scaling_ratio(small: usize, large: usize, repeats: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut median_time = |k: usize| {
        let mut times: Vec<f64> = (0..repeats)
            .map(|_| {
                let inst = synthetic_instance(k, &mut rng);
                let t = Instant::now();
                let e = rce_allocate(&inst);
                let dt = t.elapsed().as_secs_f64();
                std::hint::black_box(e);
                dt
            })
            .collect();
        times.sort_by(f64::total_cmp);
        times[times.len() / 2]
    };
    let a = median_time(small);
    let b = median_time(large);
    b / a.max(1e-12)
}

/// Finite-difference check of the full actor (trunk, step head and
/// sensing branch) with the sampling noise held fixed.
pub fn check_actor<R: Rng + ?Sized>(actor: &Actor, points: usize, rng: &mut R) -> Result<GradCheckReport> {
    const BATCH: usize = 3;
    let mut report = GradCheckReport::default();
    let params = actor.params_flat();
    let mut probe = actor.clone();
    let mut done = 0;
    while done < points {
        let s = Array2::from_shape_fn((BATCH, actor.state_dim()), |_| rng.random_range(0.0..1.0));
        let noise = ActorNoise::draw(BATCH, actor.discrete_dim(), actor.continuous_dim(), rng);
        let w_a = Array2::from_shape_fn((BATCH, actor.action_dim()), |_| rng.random_range(-1.0..1.0));
        let w_lp: Vec<f64> = (0..BATCH).map(|_| rng.random_range(-1.0..1.0)).collect();
        let temp = 1.0;
        let pass = actor.forward(s.view(), &noise, temp)?;
        let grads = actor.backward(&pass, &w_a, &w_lp, false)?;
        let dir = unit_direction(params.len(), rng);
        let analytic = dot(&grads.flat(), &dir);
        let mut flipped = false;
        let numeric = directional_fd(&params, &dir, FD_STEP, |q| {
            probe.set_params_flat(q).expect("same length");
            let p = probe.forward(s.view(), &noise, temp).expect("same shape");
            flipped |= p.steps != pass.steps;
            let a = probe.action_matrix(&p);
            (a * &w_a).sum() + p.log_prob.iter().zip(&w_lp).map(|(l, w)| l * w).sum::<f64>()
        });
        // a step choice flipping inside the stencil makes the objective
        // discontinuous there; such points are redrawn
        if flipped {
            continue;
        }
        report = report.merge(GradCheckReport { points: 1, max_rel_error: relative_error(analytic, numeric) });
        done += 1;
    }
    Ok(report)
}

/// Gradient checks of every network used by the learned policies.
pub fn gradcheck_all(system: &SystemConfig, cfg: &AgentConfig, points: usize, seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = system.num_users;
    let m = system.num_steps();
    let mut out = Vec::new();
    for (name, per_user, mode) in [
        ("actor (learned steps)", 1, StepMode::Learned),
        ("actor (learned steps, communication fractions)", 2, StepMode::Learned),
        ("actor (fixed step)", 1, StepMode::Fixed(m / 2)),
    ] {
        let mut agent = SacAgent::new(k, m, per_user, mode, cfg.clone(), &mut rng)?;
        // enlarge the small-gain output layers so every term is exercised
        let p: Vec<f64> = agent.actor.params_flat().iter().map(|v| v * 3.0).collect();
        agent.actor.set_params_flat(&p)?;
        out.push((name.to_string(), check_actor(&agent.actor, points, &mut rng)?));
        if per_user == 1 && mode == StepMode::Learned {
            out.push(("critic".to_string(), check_mlp(&agent.critics[0], points, (0.0, 1.0), &mut rng)?));
        }
        if per_user == 2 {
            out.push(("critic (wide action)".to_string(), check_mlp(&agent.critics[0], points, (0.0, 1.0), &mut rng)?));
        }
    }
    Ok(out)
}

/// Timeline by simulating the sensing sweep and the FCFS server event by
/// event.
pub fn event_driven_timeline(e_s: &[f64], z: &[u32], config: &SystemConfig) -> Timeline {
    let k = e_s.len();
    // sensing completions, in service order
    let mut clock = 0.0;
    let mut arrivals = Vec::with_capacity(k);
    for &e in e_s {
        clock += sensing_cycles(e, config) * config.sensing_cycle_s;
        arrivals.push(clock);
    }
    let radio_free = clock;
    let mut server_free = 0.0f64;
    let (mut queue, mut generation, mut wait) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    for i in 0..k {
        let begin = arrivals[i].max(server_free);
        let service = generation_time(z[i], config);
        let done = begin + service;
        server_free = done;
        queue[i] = begin - arrivals[i];
        generation[i] = service;
        // the radio is busy sensing until the last user is sensed
        wait[i] = done.max(radio_free) - done;
    }
    Timeline { arrival: arrivals, queue, generation, wait }
}

/// Largest absolute difference between the closed-form and the simulated
/// timeline over random instances with up to six users.
pub fn verify_fcfs(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let k = rng.random_range(1..=6);
        let config = SystemConfig {
            num_users: k,
            server_flops: rng.random_range(5e12..60e12),
            ..SystemConfig::default()
        };
        let e_s: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..config.e_s_max_j)).collect();
        let z: Vec<u32> = (0..k).map(|_| rng.random_range(config.z_min..=config.z_max)).collect();
        let a = timeline(&e_s, &z, &config);
        let b = event_driven_timeline(&e_s, &z, &config);
        for (x, y) in [(&a.arrival, &b.arrival), (&a.queue, &b.queue), (&a.generation, &b.generation), (&a.wait, &b.wait)] {
            for (p, q) in x.iter().zip(y) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        let r = verify_rce(40, 1).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(verify_fcfs(200, 2) < 1e-12);
    }

    #[test]
    fn small_networks_pass_gradcheck() {
        let cfg = AgentConfig { trunk_hidden: vec![16, 12], sensing_hidden: vec![8], critic_hidden: vec![16, 8], ..AgentConfig::default() };
        let sys = SystemConfig { num_users: 3, ..SystemConfig::default() };
        for (name, r) in gradcheck_all(&sys, &cfg, 15, 3).unwrap() {
            assert!(r.passes(GRAD_TOL), "{name}: {r:?}");
        }
    }

    #[test]
    fn event_simulation_on_a_hand_case() {
        // two users: 0.05 J then 0.01 J of sensing, steps 10 and 5
        let c = SystemConfig { num_users: 2, ..SystemConfig::default() };
        let t = event_driven_timeline(&[0.05, 0.01], &[10, 5], &c);
        assert!((t.arrival[0] - 0.05).abs() < 1e-12 && (t.arrival[1] - 0.06).abs() < 1e-12);
        // user 1 waits for the 0.1 s generation of user 0
        assert!((t.queue[1] - 0.09).abs() < 1e-12);
        assert_eq!(t.wait, vec![0.0, 0.0]);
        // a short first sensing leaves user 0 waiting for the radio
        let t = event_driven_timeline(&[0.001, 0.09], &[5, 5], &c);
        assert!((t.wait[0] - 0.04).abs() < 1e-12 && t.wait[1] == 0.0 && t.queue[1] == 0.0);
    }
}
