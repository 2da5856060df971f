//! Experiment configuration files.
//!
//! A TOML document with optional `[env]`, `[search]` and `[run]` tables.
//! Missing keys take their defaults; unknown keys are errors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::run::RunConfig;
use crate::uct::SearchConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub search: SearchConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.search.validate()?;
        self.run.validate()?;
        if self.search.rho != self.run.rho {
            return Err(Error::Config(format!(
                "search.rho ({}) and run.rho ({}) differ",
                self.search.rho, self.run.rho
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// The snapshot written next to run outputs; loading it reproduces `self`.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serialization is infallible")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.run.master_seed = 99;
        cfg.run.iterations = 1;
        cfg.search.simulations = 8;
        cfg.env.social_rule_enabled = true;
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_fail() {
        assert!(ExperimentConfig::from_toml_str("[run]\nfoo = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[bogus]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[search]\nhorizon = 0\n").is_err());
    }
}
