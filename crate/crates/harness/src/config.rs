//! Experiment configuration loaded from a JSON document.

use std::path::{Path, PathBuf};

use fdswipt_core::model::SystemConfig;
use fdswipt_core::search::GridSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}:{line}: {message}")]
    Invalid { path: String, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub base: SystemConfig,
    pub p_req_sweep_dbm: Vec<f64>,
    /// `(n_a, n_b)` pairs.
    pub antenna_configs: Vec<(usize, usize)>,
    pub trials: usize,
    pub grid: GridSpec,
    pub output_dir: PathBuf,
    pub emit_plots: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            base: SystemConfig::default(),
            p_req_sweep_dbm: (0..=6).map(f64::from).collect(),
            antenna_configs: vec![(3, 3), (3, 4), (4, 4)],
            trials: 200,
            grid: GridSpec::default(),
            output_dir: PathBuf::from("out"),
            emit_plots: false,
        }
    }
}

impl ExperimentConfig {
    /// Checks every field; the error names the offending key.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.trials < 1 {
            return Err(("trials", "trials must be at least 1".into()));
        }
        if self.p_req_sweep_dbm.is_empty() {
            return Err(("p_req_sweep_dbm", "sweep must not be empty".into()));
        }
        if let Some(x) = self.p_req_sweep_dbm.iter().find(|x| !x.is_finite()) {
            return Err(("p_req_sweep_dbm", format!("sweep values must be finite (got {x})")));
        }
        if self.antenna_configs.is_empty() {
            return Err((
                "antenna_configs",
                "at least one antenna configuration is required".into(),
            ));
        }
        if let Some((a, b)) = self.antenna_configs.iter().find(|(a, b)| *a < 2 || *b < 2) {
            return Err((
                "antenna_configs",
                format!("antenna counts must be at least 2 (got ({a}, {b}))"),
            ));
        }
        self.base.validate().map_err(|e| ("base", e.to_string()))?;
        self.grid.validate().map_err(|e| ("grid", e.to_string()))?;
        Ok(())
    }

    pub fn from_json(text: &str, path: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        config.validate().map_err(|(key, message)| ConfigError::Invalid {
            path: path.to_string(),
            line: key_line(text, key),
            message,
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: name.clone(),
            source,
        })?;
        Self::from_json(&text, &name)
    }
}

/// 1-based line of the first occurrence of `"key"`, or 1 when absent.
fn key_line(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map_or(1, |i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ExperimentConfig::from_json("{}", "x.json").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.trials, 200);
        assert_eq!(c.p_req_sweep_dbm.len(), 7);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let text = "{\n  \"trials\": 3,\n  \"trails\": 4\n}";
        match ExperimentConfig::from_json(text, "c.json") {
            Err(ConfigError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("trails"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nested_unknown_key_is_rejected() {
        let text = "{\n  \"base\": {\n    \"n_a\": 3,\n    \"sigma\": 1.0\n  }\n}";
        assert!(matches!(
            ExperimentConfig::from_json(text, "c.json"),
            Err(ConfigError::Parse { line: 4, .. })
        ));
    }

    #[test]
    fn invalid_value_points_at_the_key() {
        let text = "{\n  \"p_req_sweep_dbm\": [0],\n  \"trials\": 0\n}";
        match ExperimentConfig::from_json(text, "c.json") {
            Err(ConfigError::Invalid { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "{\n  \"base\": {\"n_a\": 1}\n}";
        assert!(matches!(
            ExperimentConfig::from_json(text, "c.json"),
            Err(ConfigError::Invalid { line: 2, .. })
        ));
    }

    #[test]
    fn round_trips_through_json() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text, "c.json").unwrap(), c);
    }
}
