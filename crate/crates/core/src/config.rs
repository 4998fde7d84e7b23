//! Run configuration: every threshold, distractor constant, prototype toggle
//! and the dataset seed in one JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ground::Vocab;
use crate::keyframe::KeyframeParams;
use crate::phaseseg::{SegThresholds, ThresholdError};
use crate::qgen::QgenParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub thresholds: SegThresholds,
    pub keyframes: KeyframeParams,
    pub qgen: QgenParams,
    /// Verb/object lexicon; the built-in one when absent.
    pub vocab: Option<PathBuf>,
    /// Chat endpoint that replaces rule-based instruction parsing.
    pub instruction_endpoint: Option<InstructionEndpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionEndpoint {
    pub url: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

fn default_key_env() -> String {
    crate::evalharness::API_KEY_ENV.to_string()
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Thresholds(#[from] ThresholdError),
    #[error("{0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.thresholds.validate()?;
        let q = &self.qgen;
        if !(0.0..=1.0).contains(&q.nab_p) {
            return Err(ConfigError::Invalid(format!("nab_p {} outside [0, 1]", q.nab_p)));
        }
        if q.direction_theta <= 0.0 || q.direction_theta >= 1.0 {
            return Err(ConfigError::Invalid(format!("direction_theta {} outside (0, 1)", q.direction_theta)));
        }
        if q.corr_distractors < 3 || q.corr_distractors > 4 {
            return Err(ConfigError::Invalid("corr_distractors must be 3 or 4".into()));
        }
        if self.keyframes.budget == 0 {
            return Err(ConfigError::Invalid("keyframe budget must be positive".into()));
        }
        Ok(())
    }

    pub fn load_vocab(&self) -> Result<Vocab, ConfigError> {
        match &self.vocab {
            None => Ok(Vocab::builtin().clone()),
            Some(p) => Vocab::load(p).map_err(|message| ConfigError::Parse { path: p.clone(), message }),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_value(c.to_json()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_document_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 7, "qgen": {"nab_p": 0.0}}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.qgen.nab_p, 0.0);
        assert_eq!(c.thresholds, SegThresholds::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 7}"#).is_err());
    }

    #[test]
    fn bad_values_rejected() {
        let mut c = RunConfig::default();
        c.qgen.nab_p = 1.5;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.thresholds.tau_g = 0.9;
        assert!(c.validate().is_err());
    }
}
