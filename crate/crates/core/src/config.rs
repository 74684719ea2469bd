//! Physical and algorithmic constants of the ISAC/AIGC system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every constant the service model, the scenario generator and the
/// allocators read. Defaults reproduce the reference simulation setup.
///
/// The sensing-accuracy fit (`xi`, `varpi`, `tau`) has no published values;
/// the defaults give roughly 0.87 accuracy at 200 sensing cycles with a slowly
/// binding ceiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// ISAC device coverage radius (m).
    pub coverage_radius_m: f64,
    /// Number of served users `K`.
    pub num_users: usize,
    /// Total OFDM bandwidth (Hz), split evenly across users.
    pub bandwidth_hz: f64,
    /// Maximum service time per user (s).
    pub t_max_s: f64,
    /// Duration of one sensing cycle (s).
    pub sensing_cycle_s: f64,
    /// Device display capacity (pixels).
    pub display_capacity_px: f64,
    /// Total energy budget of the ISAC device (J).
    pub e_max_j: f64,
    /// Per-user sensing energy cap (J).
    pub e_s_max_j: f64,
    /// Bits per pixel.
    pub bits_per_pixel: f64,
    pub z_min: u32,
    pub z_max: u32,
    /// Floating point operations per generation step.
    pub flops_per_step: f64,
    /// Server computation capacity (FLOPS).
    pub server_flops: f64,
    /// Forward-process scaling factor of the generation error.
    pub eps_fwd: f64,
    /// Attenuation of the generation error per step.
    pub mu: f64,
    /// Sensing power (W).
    pub p_sense_w: f64,
    /// Transmission power (W).
    pub p_comm_w: f64,
    /// Noise power spectral density (W/Hz).
    pub noise_psd_w_per_hz: f64,
    /// Sensing accuracy ceiling.
    pub xi: f64,
    pub varpi: f64,
    pub tau: f64,
    /// Normalization gain for the log-gain state feature. `None` selects the
    /// path-loss-only gain at the coverage edge.
    pub gain_norm: Option<f64>,
    /// Range of the per-user minimum CAQA requirement.
    pub omega_min_range: [f64; 2],
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            coverage_radius_m: 200.0,
            num_users: 10,
            bandwidth_hz: 1e8,
            t_max_s: 1.0,
            sensing_cycle_s: 6e-5,
            display_capacity_px: 512.0 * 512.0,
            e_max_j: 1.0,
            e_s_max_j: 0.1,
            bits_per_pixel: 24.0,
            z_min: 5,
            z_max: 10,
            flops_per_step: 0.2e12,
            server_flops: 20e12,
            eps_fwd: 0.03,
            mu: 0.2,
            p_sense_w: 1.0,
            p_comm_w: 1.5,
            // -174 dBm/Hz
            noise_psd_w_per_hz: 10f64.powf(-20.4),
            xi: 0.95,
            varpi: 2.0,
            tau: 0.6,
            gain_norm: None,
            omega_min_range: [0.4, 0.45],
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("coverage_radius_m", self.coverage_radius_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("t_max_s", self.t_max_s),
            ("sensing_cycle_s", self.sensing_cycle_s),
            ("display_capacity_px", self.display_capacity_px),
            ("e_max_j", self.e_max_j),
            ("e_s_max_j", self.e_s_max_j),
            ("bits_per_pixel", self.bits_per_pixel),
            ("flops_per_step", self.flops_per_step),
            ("server_flops", self.server_flops),
            ("mu", self.mu),
            ("p_sense_w", self.p_sense_w),
            ("p_comm_w", self.p_comm_w),
            ("noise_psd_w_per_hz", self.noise_psd_w_per_hz),
            ("varpi", self.varpi),
            ("tau", self.tau),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {value}")));
            }
        }
        if self.num_users == 0 {
            return Err(Error::InvalidConfig("num_users must be at least 1".into()));
        }
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return Err(Error::InvalidConfig(format!("xi must lie in (0, 1], got {}", self.xi)));
        }
        if !(self.eps_fwd > 0.0 && self.eps_fwd <= 1.0) {
            return Err(Error::InvalidConfig(format!("eps_fwd must lie in (0, 1], got {}", self.eps_fwd)));
        }
        if self.z_min < 1 || self.z_max < self.z_min {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= z_min <= z_max, got z_min={} z_max={}",
                self.z_min, self.z_max
            )));
        }
        if self.e_s_max_j > self.e_max_j {
            return Err(Error::InvalidConfig("e_s_max_j must not exceed e_max_j".into()));
        }
        if let Some(ln) = self.gain_norm {
            if !(ln.is_finite() && ln > 0.0) {
                return Err(Error::InvalidConfig(format!("gain_norm must be positive, got {ln}")));
            }
        }
        let [lo, hi] = self.omega_min_range;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "omega_min_range must satisfy 0 < lo <= hi < 1, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    /// Number of discrete generation step choices.
    pub fn num_steps(&self) -> usize {
        (self.z_max - self.z_min + 1) as usize
    }

    /// Normalization gain `L_n` of the log-gain state feature.
    pub fn gain_norm(&self) -> f64 {
        self.gain_norm
            .unwrap_or_else(|| 10f64.powf(-crate::scenario::path_loss_db(self.coverage_radius_m) / 10.0))
    }

    /// Per-user subchannel bandwidth `B / K`.
    pub fn subchannel_hz(&self) -> f64 {
        self.bandwidth_hz / self.num_users as f64
    }

    /// Bits needed to fill the display, `beta * D_c`.
    pub fn display_bits(&self) -> f64 {
        self.bits_per_pixel * self.display_capacity_px
    }

    /// Energy of one sensing cycle, `T_s * P_s`.
    pub fn cycle_energy(&self) -> f64 {
        self.sensing_cycle_s * self.p_sense_w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        SystemConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_parameters() {
        let c = SystemConfig { xi: 1.2, ..SystemConfig::default() };
        assert!(c.validate().is_err());

        let c = SystemConfig { z_max: 4, ..SystemConfig::default() };
        assert!(c.validate().is_err());

        let c = SystemConfig { e_s_max_j: 2.0, ..SystemConfig::default() };
        assert!(c.validate().is_err());

        let c = SystemConfig { p_comm_w: 0.0, ..SystemConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn table_derived_quantities() {
        let c = SystemConfig::default();
        assert_eq!(c.subchannel_hz(), 1e7);
        assert_eq!(c.display_bits(), 6_291_456.0);
        assert_eq!(c.num_steps(), 6);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let c: SystemConfig = toml::from_str("num_users = 4\ne_max_j = 0.8\n").unwrap();
        assert_eq!(c.num_users, 4);
        assert_eq!(c.e_max_j, 0.8);
        assert_eq!(c.z_max, 10);
    }
}
