use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::StepMode;
use crate::baselines::{self, CgqFsg, Decision};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Every policy the harness can train or evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyKind {
    LpdrlF,
    Lpdrl,
    SaqaFg { z: u32 },
    JdrlF,
    CgqFsg { alpha: f64 },
}

impl PolicyKind {
    pub fn is_learned(&self) -> bool {
        !matches!(self, PolicyKind::CgqFsg { .. })
    }

    /// Continuous policy outputs per user.
    pub fn continuous_per_user(&self) -> usize {
        match self {
            PolicyKind::JdrlF => 2,
            _ => 1,
        }
    }

    pub fn step_mode(&self, config: &SystemConfig) -> Result<StepMode> {
        match *self {
            PolicyKind::SaqaFg { z } => {
                if z < config.z_min || z > config.z_max {
                    return Err(Error::StepOutOfRange { z, min: config.z_min, max: config.z_max });
                }
                Ok(StepMode::Fixed((z - config.z_min) as usize))
            }
            _ => Ok(StepMode::Learned),
        }
    }

    /// Allocation from decoded policy outputs. `cont` holds the sensing
    /// outputs of all users followed, for JDRL-F, by the communication
    /// fractions.
    pub fn realize(&self, scenario: &Scenario, steps: &[u32], cont: &[f64], config: &SystemConfig) -> Result<Decision> {
        let k = scenario.num_users();
        if self.is_learned() && cont.len() != k * self.continuous_per_user() {
            return Err(Error::LengthMismatch { expected: k * self.continuous_per_user(), found: cont.len() });
        }
        match *self {
            PolicyKind::LpdrlF => baselines::lpdrl_f_allocation(scenario, steps, cont, config),
            PolicyKind::Lpdrl => baselines::lpdrl_allocation(scenario, steps, cont, config),
            PolicyKind::SaqaFg { z } => baselines::saqa_fg_allocation(scenario, z, cont, config),
            PolicyKind::JdrlF => baselines::jdrl_f_allocation(scenario, steps, &cont[..k], &cont[k..], config),
            PolicyKind::CgqFsg { alpha } => baselines::cgq_fsg(scenario, &CgqFsg::new(alpha)?, config),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::LpdrlF => write!(f, "lpdrl-f"),
            PolicyKind::Lpdrl => write!(f, "lpdrl"),
            PolicyKind::SaqaFg { z } => write!(f, "saqa-fg-{z}"),
            PolicyKind::JdrlF => write!(f, "jdrl-f"),
            PolicyKind::CgqFsg { alpha } => write!(f, "cgq-fsg-{alpha}"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    /// Accepts the display names; `saqa-fg` and `cgq-fsg` without a suffix
    /// take step 7 and share 0.2.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown policy `{s}`"));
        let lower = s.to_ascii_lowercase();
        Ok(match lower.as_str() {
            "lpdrl-f" => PolicyKind::LpdrlF,
            "lpdrl" => PolicyKind::Lpdrl,
            "jdrl-f" => PolicyKind::JdrlF,
            "saqa-fg" => PolicyKind::SaqaFg { z: 7 },
            "cgq-fsg" => PolicyKind::CgqFsg { alpha: 0.2 },
            other => {
                if let Some(z) = other.strip_prefix("saqa-fg-") {
                    PolicyKind::SaqaFg { z: z.parse().map_err(|_| bad())? }
                } else if let Some(a) = other.strip_prefix("cgq-fsg-") {
                    PolicyKind::CgqFsg { alpha: a.parse().map_err(|_| bad())? }
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in [
            PolicyKind::LpdrlF,
            PolicyKind::Lpdrl,
            PolicyKind::JdrlF,
            PolicyKind::SaqaFg { z: 9 },
            PolicyKind::CgqFsg { alpha: 0.2 },
        ] {
            assert_eq!(p.to_string().parse::<PolicyKind>().unwrap(), p);
        }
        assert_eq!("cgq-fsg".parse::<PolicyKind>().unwrap(), PolicyKind::CgqFsg { alpha: 0.2 });
        assert!("dqn".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn step_modes() {
        let c = SystemConfig::default();
        assert_eq!(PolicyKind::SaqaFg { z: 9 }.step_mode(&c).unwrap(), StepMode::Fixed(4));
        assert!(PolicyKind::SaqaFg { z: 11 }.step_mode(&c).is_err());
        assert_eq!(PolicyKind::JdrlF.continuous_per_user(), 2);
    }
}
