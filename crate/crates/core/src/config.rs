//! The single declarative config file. Credentials are never stored here;
//! HTTP providers name the environment variable holding their key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backtest::{BacktestConfig, BaselineParams};
use crate::consensus::ConsensusParams;
use crate::error::{Error, Result};
use crate::metrics::PreferenceRegion;
use crate::provider::{MockBehavior, ProviderSpec};
use crate::signals::SignalConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub data_dir: PathBuf,
    /// Allowed browser origin; `None` allows any.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            cors_origin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub output_dir: PathBuf,
    pub roster: Vec<ProviderSpec>,
    /// Model trader; the deterministic policy decides when absent.
    pub trader: Option<ProviderSpec>,
    pub max_in_flight: usize,
    pub consensus: ConsensusParams,
    pub signals: SignalConfig,
    pub backtest: BacktestConfig,
    pub baselines: BaselineParams,
    pub preference: Option<PreferenceRegion>,
    pub service: ServiceConfig,
}

pub fn default_roster() -> Vec<ProviderSpec> {
    (1..=3)
        .map(|i| ProviderSpec::mock(&format!("mock-{i}"), i, MockBehavior::Faithful))
        .collect()
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            roster: default_roster(),
            trader: None,
            max_in_flight: 4,
            consensus: ConsensusParams::default(),
            signals: SignalConfig::default(),
            backtest: BacktestConfig::default(),
            baselines: BaselineParams::default(),
            preference: None,
            service: ServiceConfig::default(),
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
            field: "<document>".into(),
            message: e.to_string(),
        })?;
        let cfg: AppConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            field: e.path().to_string(),
            message: e.into_inner().message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            field: "<file>".into(),
            message: format!("{}: {e}", path.display()),
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| Error::Config {
            field: name.into(),
            message: e.to_string(),
        };
        self.consensus.validate().map_err(|e| field("consensus", e))?;
        self.backtest.validate()?;
        if self.roster.is_empty() {
            return Err(Error::Config {
                field: "roster".into(),
                message: "at least one provider is required".into(),
            });
        }
        let mut ids: Vec<&str> = self.roster.iter().map(|s| s.provider_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config {
                field: "roster".into(),
                message: format!("duplicate provider id `{}`", w[0]),
            });
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config {
                field: "max_in_flight".into(),
                message: "must be at least 1".into(),
            });
        }
        if let Some(p) = &self.preference {
            p.validate().map_err(|e| field("preference", e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(AppConfig::from_toml("").unwrap(), AppConfig::default());
    }

    #[test]
    fn errors_name_the_field() {
        match AppConfig::from_toml("[consensus]\ntau = \"high\"\n") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "consensus.tau"),
            other => panic!("{other:?}"),
        }
        match AppConfig::from_toml("[backtest]\ninitial_cash = -1.0\n") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "backtest.initial_cash"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(AppConfig::from_toml("[signals]\nbogus = 1\n").is_err());
    }
}
