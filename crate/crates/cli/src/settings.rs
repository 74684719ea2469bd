use std::fs;
use std::path::Path;

use anyhow::Context;
use caqa::agent::AgentConfig;
use caqa::harness::ExperimentPlan;
use caqa::SystemConfig;
use serde::Deserialize;

/// Contents of a `--config` file. Every section is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub system: SystemConfig,
    pub agent: AgentConfig,
    pub plan: Option<ExperimentPlan>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let settings: Settings = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).map_err(caqa::Error::ConfigParse)?
            }
            None => Settings::default(),
        };
        settings.system.validate()?;
        settings.agent.validate()?;
        if let Some(plan) = &settings.plan {
            plan.validate()?;
        }
        Ok(settings)
    }
}
