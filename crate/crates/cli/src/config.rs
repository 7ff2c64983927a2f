//! Optional TOML configuration for the mining and linking thresholds.
//! Precedence is defaults, then the config file, then command-line flags.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;
use trackmine_core::{LinkerConfig, MinerConfig};

/// Errors from reading or interpreting a config file.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// The file could not be read.
    #[error("{path}: {source}")]
    Io {
        /// Offending file.
        path: String,
        /// Operating-system error.
        source: std::io::Error,
    },
    /// The file could not be parsed or holds unknown keys.
    #[error("{path}: {message}")]
    Parse {
        /// Offending file.
        path: String,
        /// Parser diagnostic.
        message: String,
    },
    /// A value is out of range or unrecognized.
    #[error("{0}")]
    Value(String),
}

/// `[mine]` section: the three mining thresholds.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MineSection {
    /// Decisiveness margin on the two largest overlaps.
    pub tau0: f64,
    /// Minimum overlap in pixels.
    pub tau1: f64,
    /// Minimum overlap-to-residual ratio.
    pub tau2: f64,
}

impl Default for MineSection {
    fn default() -> Self {
        let d = MinerConfig::default();
        MineSection {
            tau0: d.tau0,
            tau1: d.tau1,
            tau2: d.tau2,
        }
    }
}

/// `[link]` section: linking threshold, window, track filter, and terms.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    /// Maximum combined distance for a link.
    pub tau: f64,
    /// How many frames back a track stays open.
    pub window: usize,
    /// Minimum surviving track length.
    pub min_track: usize,
    /// Enabled payoff terms: any of `siou`, `embedding`, `time`.
    pub terms: Vec<String>,
}

impl Default for LinkSection {
    fn default() -> Self {
        let d = LinkerConfig::default();
        LinkSection {
            tau: d.tau,
            window: d.window,
            min_track: d.min_track,
            terms: default_terms(&d),
        }
    }
}

fn default_terms(cfg: &LinkerConfig) -> Vec<String> {
    let mut terms = Vec::new();
    if cfg.use_siou {
        terms.push("siou".to_owned());
    }
    if cfg.use_embedding {
        terms.push("embedding".to_owned());
    }
    if cfg.use_time {
        terms.push("time".to_owned());
    }
    terms
}

/// Whole config file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    /// Mining thresholds.
    pub mine: MineSection,
    /// Linking parameters.
    pub link: LinkSection,
}

impl FileConfig {
    /// Loads a config file, or the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Mining thresholds with flag overrides applied.
    pub fn miner_config(
        &self,
        tau0: Option<f64>,
        tau1: Option<f64>,
        tau2: Option<f64>,
    ) -> Result<MinerConfig, ConfigError> {
        let cfg = MinerConfig {
            tau0: tau0.unwrap_or(self.mine.tau0),
            tau1: tau1.unwrap_or(self.mine.tau1),
            tau2: tau2.unwrap_or(self.mine.tau2),
        };
        cfg.validate()
            .map_err(|e| ConfigError::Value(e.to_string()))?;
        Ok(cfg)
    }

    /// Linking parameters with flag overrides applied.
    pub fn linker_config(
        &self,
        tau: Option<f64>,
        window: Option<usize>,
        min_track: Option<usize>,
        terms: Option<&str>,
    ) -> Result<LinkerConfig, ConfigError> {
        let terms = match terms {
            Some(list) => list.split(',').map(|t| t.trim().to_owned()).collect(),
            None => self.link.terms.clone(),
        };
        let mut cfg = LinkerConfig {
            tau: tau.unwrap_or(self.link.tau),
            window: window.unwrap_or(self.link.window),
            min_track: min_track.unwrap_or(self.link.min_track),
            use_siou: false,
            use_embedding: false,
            use_time: false,
        };
        for term in &terms {
            match term.as_str() {
                "siou" => cfg.use_siou = true,
                "embedding" => cfg.use_embedding = true,
                "time" => cfg.use_time = true,
                other => {
                    return Err(ConfigError::Value(format!(
                        "unknown payoff term {other:?} (expected siou, embedding, or time)"
                    )));
                }
            }
        }
        cfg.validate()
            .map_err(|e| ConfigError::Value(e.to_string()))?;
        Ok(cfg)
    }
}
