use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sbc::SbcConfig;

/// JSON run configuration for `sbc run`. Unknown keys are rejected.
///
/// ```json
/// {
///   "out_dir": "runs/hmc-nc",
///   "parallelism": 8,
///   "sbc": { "sampler": "hmc", "parameterization": "noncentered", "iterations": 300 }
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Relative paths are resolved against the config file's directory.
    pub out_dir: PathBuf,
    pub parallelism: usize,
    /// Write every iteration's full draws, states included.
    pub store_states: bool,
    pub sbc: SbcConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("sbc-out"),
            parallelism: 1,
            store_states: false,
            sbc: SbcConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if cfg.out_dir.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.out_dir = dir.join(&cfg.out_dir);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        self.sbc.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse(r#"{"sbc": {"iterations": 3}, "colour": 1}"#).is_err());
        assert!(RunConfig::parse(r#"{"sbc": {"iteratons": 3}}"#).is_err());
        assert!(RunConfig::parse(r#"{"sbc": {"hmc": {"n_leapfrog": 8, "foo": 1}}}"#).is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::parse(r#"{"sbc": {"sampler": "ksc", "iterations": 3, "prior": {"mu_var": 100}}}"#).unwrap();
        assert_eq!(cfg.sbc.iterations, 3);
        assert_eq!(cfg.sbc.prior.mu_var, 100.0);
        assert_eq!(cfg.sbc.prior.phi_beta_a, 20.0);
        assert_eq!(cfg.sbc.ksc.n_draws, 9999);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::parse(r#"{"parallelism": 0}"#).is_err());
        assert!(RunConfig::parse(r#"{"sbc": {"rank_thin": 0}}"#).is_err());
    }
}
