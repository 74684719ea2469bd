//! Random user scenarios: positions, channels, CAQA requirements and
//! sensing priority, plus the agent state vector built from them.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};

/// Fades below this are redrawn so the log-gain stays finite.
pub const MIN_FADE: f64 = 1e-6;

/// One user as seen by a single service slot. Users inside a [`Scenario`]
/// are indexed in sensing order, so `users[0]` has `priority_rank == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserScenario {
    pub distance_m: f64,
    /// Linear power gain: path loss times Rayleigh power fade.
    pub gain: f64,
    /// `log10(gain / L_n)`.
    pub log_gain: f64,
    pub omega_min: f64,
    /// 1 is sensed first.
    pub priority_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub users: Vec<UserScenario>,
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Interleaved `[h_1, omega_1, ..., h_K, omega_K]`.
    pub fn state(&self) -> Vec<f64> {
        self.users.iter().flat_map(|u| [u.log_gain, u.omega_min]).collect()
    }

    pub fn gains(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.gain).collect()
    }

    pub fn omega_mins(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.omega_min).collect()
    }
}

/// Large-scale path loss in dB at distance `d` metres.
pub fn path_loss_db(distance_m: f64) -> f64 {
    128.1 + 37.6 * (distance_m / 1000.0).log10()
}

/// Area-uniform radius on a disk from a uniform variate `u` in (0, 1].
pub fn disk_distance(radius_m: f64, u: f64) -> f64 {
    radius_m * u.sqrt()
}

/// `K` distances drawn uniformly over the coverage disk.
pub fn draw_positions<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Vec<f64> {
    (0..config.num_users)
        // 1 - U[0,1) lies in (0,1], which keeps every distance positive.
        .map(|_| disk_distance(config.coverage_radius_m, 1.0 - rng.random::<f64>()))
        .collect()
}

/// Gain for a given distance and Rayleigh power fade.
pub fn gain_with_fade(distance_m: f64, fade: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::NonPositiveDistance(distance_m));
    }
    let gain = 10f64.powf(-path_loss_db(distance_m) / 10.0) * fade;
    if !(gain > 0.0) {
        return Err(Error::NonPositiveGain(gain));
    }
    Ok(gain)
}

pub fn draw_fade<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let fade: f64 = Exp1.sample(rng);
        if fade >= MIN_FADE {
            return fade;
        }
    }
}

/// Path loss times an exponential (mean one) power fade.
pub fn channel_gain<R: Rng + ?Sized>(distance_m: f64, rng: &mut R) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::NonPositiveDistance(distance_m));
    }
    gain_with_fade(distance_m, draw_fade(rng))
}

pub fn normalized_log_gain(gain: f64, config: &SystemConfig) -> Result<f64> {
    if !(gain > 0.0) {
        return Err(Error::NonPositiveGain(gain));
    }
    Ok((gain / config.gain_norm()).log10())
}

/// Redraws fades, requirements and sensing order for fixed user positions.
///
/// Positions persist for an episode; everything else changes per slot.
pub fn draw_slot<R: Rng + ?Sized>(config: &SystemConfig, distances: &[f64], rng: &mut R) -> Result<Scenario> {
    let [lo, hi] = config.omega_min_range;
    let mut ranks: Vec<usize> = (1..=distances.len()).collect();
    ranks.shuffle(rng);
    let mut users = Vec::with_capacity(distances.len());
    for (&distance_m, &priority_rank) in distances.iter().zip(&ranks) {
        let gain = channel_gain(distance_m, rng)?;
        let omega_min = if hi > lo { rng.random_range(lo..hi) } else { lo };
        users.push(UserScenario {
            distance_m,
            gain,
            log_gain: normalized_log_gain(gain, config)?,
            omega_min,
            priority_rank,
        });
    }
    users.sort_by_key(|u| u.priority_rank);
    Ok(Scenario { users })
}

pub fn draw_scenario<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<Scenario> {
    let distances = draw_positions(config, rng);
    draw_slot(config, &distances, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn disk_boundary_and_quarter() {
        assert_eq!(disk_distance(200.0, 1.0), 200.0);
        assert_eq!(disk_distance(200.0, 0.25), 100.0);
    }

    #[test]
    fn mean_distance_matches_disk_mean() {
        let config = SystemConfig { num_users: 1000, ..SystemConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut sum = 0.0;
        let mut n = 0usize;
        for _ in 0..1000 {
            for d in draw_positions(&config, &mut rng) {
                assert!(d > 0.0 && d <= 200.0);
                sum += d;
                n += 1;
            }
        }
        let mean = sum / n as f64;
        assert!((mean - 400.0 / 3.0).abs() < 0.5, "mean {mean}");
    }

    #[test]
    fn path_loss_reference_points() {
        assert!((path_loss_db(1000.0) - 128.1).abs() < 1e-12);
        assert!((path_loss_db(100.0) - 90.5).abs() < 1e-12);
        let g = gain_with_fade(1000.0, 1.0).unwrap();
        assert!((g / 10f64.powf(-12.81) - 1.0).abs() < 1e-12);
        let g = gain_with_fade(100.0, 1.0).unwrap();
        assert!((g / 10f64.powf(-9.05) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(matches!(gain_with_fade(0.0, 1.0), Err(Error::NonPositiveDistance(_))));
        assert!(matches!(gain_with_fade(50.0, 0.0), Err(Error::NonPositiveGain(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(channel_gain(-3.0, &mut rng).is_err());
        assert!(normalized_log_gain(0.0, &SystemConfig::default()).is_err());
    }

    #[test]
    fn log_gain_normalization() {
        let config = SystemConfig::default();
        let ln = config.gain_norm();
        assert!(normalized_log_gain(ln, &config).unwrap().abs() < 1e-12);
        assert!((normalized_log_gain(10.0 * ln, &config).unwrap() - 1.0).abs() < 1e-12);

        let fixed = SystemConfig { gain_norm: Some(10f64.powf(-12.81)), ..config };
        let h = normalized_log_gain(10f64.powf(-9.05), &fixed).unwrap();
        assert!((h - 3.76).abs() < 1e-12);
    }

    #[test]
    fn edge_gain_is_the_default_normalization() {
        let config = SystemConfig::default();
        let edge = gain_with_fade(200.0, 1.0).unwrap();
        assert!((config.gain_norm() / edge - 1.0).abs() < 1e-12);
    }

    #[test]
    fn state_layout_and_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [1usize, 10] {
            let config = SystemConfig { num_users: k, ..SystemConfig::default() };
            let s = draw_scenario(&config, &mut rng).unwrap();
            let state = s.state();
            assert_eq!(state.len(), 2 * k);
            for (i, u) in s.users.iter().enumerate() {
                assert_eq!(u.priority_rank, i + 1);
                assert_eq!(state[2 * i], u.log_gain);
                assert_eq!(state[2 * i + 1], u.omega_min);
                assert!(u.gain > 0.0);
                assert!((0.4..=0.45).contains(&u.omega_min));
            }
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let config = SystemConfig::default();
        let a = draw_scenario(&config, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = draw_scenario(&config, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn requirement_and_priority_distributions() {
        let config = SystemConfig::default();
        let k = config.num_users;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 10_000;
        let distances = draw_positions(&config, &mut rng);
        let mut omega_sum = 0.0;
        // how often the user at position 0 received each rank
        let mut rank_counts = vec![0usize; k];
        for _ in 0..draws {
            let s = draw_slot(&config, &distances, &mut rng).unwrap();
            for u in &s.users {
                omega_sum += u.omega_min;
            }
            let first = s.users.iter().find(|u| u.distance_m == distances[0]).unwrap();
            rank_counts[first.priority_rank - 1] += 1;
        }
        let mean = omega_sum / (draws * k) as f64;
        assert!((mean - 0.425).abs() < 0.002, "mean {mean}");
        for c in rank_counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.1).abs() < 0.01, "rank frequency {freq}");
        }
    }
}
