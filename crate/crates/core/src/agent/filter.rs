//! Mapping raw policy outputs to feasible sensing energy, and the reward.

use crate::config::SystemConfig;
use crate::service::{inverse_sensing_accuracy, ServiceOutcome};

/// Sensing energy chosen for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilteredSensing {
    pub energy_j: f64,
    /// Smallest energy that can still meet the CAQA requirement at full
    /// display quality; `None` when no in-range energy can.
    pub floor_j: Option<f64>,
}

impl FilteredSensing {
    pub fn flagged(&self) -> bool {
        self.floor_j.is_none()
    }
}

/// Sensing energy needed for `omega_min` when quality saturates, assuming
/// generation error `eps`.
pub fn sensing_floor(omega_min: f64, eps: f64, config: &SystemConfig) -> Option<f64> {
    let n = inverse_sensing_accuracy(omega_min / (1.0 - eps), config).ok()?;
    let energy = n * config.cycle_energy();
    (energy <= config.e_s_max_j).then_some(energy)
}

/// Affine map of `d` in `[0, 1]` onto `[floor, E_s_max]`.
///
/// When the floor is unreachable the user gets `E_s_max` and the result is
/// flagged; the reward penalty then carries the violation.
pub fn action_filter(d: f64, omega_min: f64, eps: f64, config: &SystemConfig) -> FilteredSensing {
    let d = d.clamp(0.0, 1.0);
    match sensing_floor(omega_min, eps, config) {
        Some(floor) => FilteredSensing { energy_j: d * (config.e_s_max_j - floor) + floor, floor_j: Some(floor) },
        None => FilteredSensing { energy_j: config.e_s_max_j, floor_j: None },
    }
}

/// Mean CAQA minus the share of users missing their requirement.
pub fn lp_guided_reward(outcome: &ServiceOutcome) -> f64 {
    let k = outcome.users.len();
    if k == 0 {
        return 0.0;
    }
    let violations = outcome.caqa_violations();
    if violations == 0 {
        outcome.avg_caqa
    } else {
        outcome.avg_caqa - violations as f64 / k as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comra::display_energy;
    use crate::service::{aeg, caqa, UserOutcome};

    fn outcome(omegas: &[f64], mins: &[f64]) -> ServiceOutcome {
        let users: Vec<UserOutcome> = omegas
            .iter()
            .zip(mins)
            .map(|(&omega, &omega_min)| UserOutcome {
                n_cycles: 0.0,
                t_arr: 0.0,
                t_que: 0.0,
                t_gen: 0.0,
                t_wait: 0.0,
                t_comm: 0.0,
                t_total: 0.0,
                upsilon: 0.0,
                eps: 0.0,
                theta: 0.0,
                rate_bps: 0.0,
                pixels: 0.0,
                quality: 0.0,
                omega,
                omega_min,
                c1_time: true,
                c2_energy: true,
                c3_sensing: true,
                c4_steps: true,
                c5_caqa: omega >= omega_min,
                c6_display: true,
            })
            .collect();
        let avg_caqa = omegas.iter().sum::<f64>() / omegas.len() as f64;
        ServiceOutcome { users, avg_caqa, total_energy_j: 0.0 }
    }

    #[test]
    fn filter_endpoints() {
        let c = SystemConfig::default();
        let eps = aeg(7, &c).unwrap();
        let lo = action_filter(0.0, 0.42, eps, &c);
        let floor = lo.floor_j.unwrap();
        assert_eq!(lo.energy_j, floor);
        assert!(floor > 0.0 && floor < c.e_s_max_j);
        assert_eq!(action_filter(1.0, 0.42, eps, &c).energy_j, c.e_s_max_j);
    }

    #[test]
    fn floor_meets_requirement_at_full_quality() {
        let c = SystemConfig::default();
        let g = 5e-11;
        for z in c.z_min..=c.z_max {
            let eps = aeg(z, &c).unwrap();
            let f = action_filter(0.0, 0.44, eps, &c);
            let out = caqa(f.energy_j, z, display_energy(g, &c), g, &c).unwrap();
            assert!((out.omega - 0.44).abs() < 1e-6, "z {z}: {}", out.omega);
        }
    }

    #[test]
    fn unreachable_requirement_is_flagged() {
        let c = SystemConfig::default();
        let f = action_filter(0.3, 0.96, 0.0, &c);
        assert!(f.flagged());
        assert_eq!(f.energy_j, c.e_s_max_j);
        // reachable in principle but beyond the per-user sensing cap
        let f = action_filter(0.3, 0.93, 0.03, &c);
        assert!(f.flagged());
    }

    #[test]
    fn reward_cases() {
        assert!((lp_guided_reward(&outcome(&[0.5, 0.6], &[0.4, 0.4])) - 0.55).abs() < 1e-15);
        assert!((lp_guided_reward(&outcome(&[0.5, 0.6], &[0.4, 0.7])) - 0.05).abs() < 1e-15);
        assert_eq!(lp_guided_reward(&outcome(&[0.0, 0.0], &[0.4, 0.4])), -1.0);
    }
}
