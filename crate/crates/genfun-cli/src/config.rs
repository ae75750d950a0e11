//! Scenario configuration, read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use genfun::catalog::Params;
use genfun::{Registry, Tolerances};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Check ids accepted in `checks`, in no particular order.
pub const KNOWN_CHECKS: &[&str] = &[
    "gamma",
    "A1",
    "A1*",
    "A2",
    "A3w",
    "A3s",
    "duality:A3w",
    "duality:A3s",
    "thm2.1",
    "thm2.2",
    "ff",
    "thm3.1",
    "cor3.1",
    "thm3.2",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("unknown generating function `{0}`")]
    UnknownId(String),
    #[error("unknown check `{0}`")]
    UnknownCheck(String),
    #[error("{0}")]
    BadTolerance(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GfSpec {
    pub id: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    /// Segment `θ`-nodes.
    pub theta_m: usize,
    /// Nodes per axis of sampled functions on the `x`-box.
    pub x_grid: usize,
    /// Nodes per axis of the `y`-grid of transforms.
    pub y_grid: usize,
    /// Neighbourhood radius of the section and max-principle checks.
    pub radius: f64,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            theta_m: 32,
            x_grid: 65,
            y_grid: 33,
            radius: 0.1,
        }
    }
}

fn default_samples() -> usize {
    20
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub generating_function: GfSpec,
    pub checks: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads a config file; a relative `output_dir` is taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.output_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.output_dir = parent.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    /// Defaults overlaid with the `tolerances` table; unknown keys and
    /// non-positive values are errors.
    pub fn resolved_tolerances(&self) -> Result<Tolerances, ConfigError> {
        let mut map = match serde_json::to_value(Tolerances::default()) {
            Ok(serde_json::Value::Object(m)) => m,
            _ => unreachable!("tolerances serialize to an object"),
        };
        for (key, value) in &self.tolerances {
            let slot = map
                .get_mut(key)
                .ok_or_else(|| ConfigError::BadTolerance(format!("unknown tolerance `{key}`")))?;
            *slot = if slot.is_u64() {
                if !(value.fract() == 0.0 && *value >= 0.0) {
                    return Err(ConfigError::BadTolerance(format!(
                        "tolerance `{key}` must be an integer, got {value}"
                    )));
                }
                serde_json::Value::from(*value as u64)
            } else {
                serde_json::Value::from(*value)
            };
        }
        let tol: Tolerances = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| ConfigError::BadTolerance(e.to_string()))?;
        tol.validate().map_err(ConfigError::BadTolerance)?;
        Ok(tol)
    }

    /// Checks ids, tolerances, grid sizes and the generating function
    /// parameters against `registry`.
    pub fn validate(&self, registry: &Registry) -> Result<Tolerances, ConfigError> {
        let entry = registry
            .get(&self.generating_function.id)
            .ok_or_else(|| ConfigError::UnknownId(self.generating_function.id.clone()))?;
        if let Some(c) = self
            .checks
            .iter()
            .find(|c| !KNOWN_CHECKS.contains(&c.as_str()))
        {
            return Err(ConfigError::UnknownCheck(c.clone()));
        }
        if self.samples == 0 {
            return Err(ConfigError::Invalid("samples must be positive".into()));
        }
        let g = &self.grids;
        if g.theta_m < 2 || g.x_grid < 5 || g.y_grid < 3 || g.radius.is_nan() || g.radius <= 0.0 {
            return Err(ConfigError::Invalid(
                "grids need theta_m >= 2, x_grid >= 5, y_grid >= 3 and a positive radius".into(),
            ));
        }
        entry
            .build(&self.params())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.resolved_tolerances()
    }

    pub fn params(&self) -> Params {
        self.generating_function.params.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        checks = ["A2"]
        [generating_function]
        id = "ot_quad"
    "#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.samples, 20);
        assert_eq!(cfg.grids, Grids::default());
        assert_eq!(
            cfg.validate(&Registry::default()).unwrap(),
            Tolerances::default()
        );
    }

    #[test]
    fn tolerance_overrides() {
        let mut cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        cfg.tolerances.insert("conv_tol".into(), 1e-6);
        cfg.tolerances.insert("max_iter".into(), 80.0);
        let tol = cfg.resolved_tolerances().unwrap();
        assert_eq!(tol.conv_tol, 1e-6);
        assert_eq!(tol.max_iter, 80);
        cfg.tolerances.insert("conv_tol".into(), -1.0);
        assert!(matches!(
            cfg.resolved_tolerances(),
            Err(ConfigError::BadTolerance(_))
        ));
        cfg.tolerances.clear();
        cfg.tolerances.insert("nope".into(), 1.0);
        assert!(matches!(
            cfg.resolved_tolerances(),
            Err(ConfigError::BadTolerance(_))
        ));
    }

    #[test]
    fn unknown_ids_are_rejected() {
        let reg = Registry::default();
        let mut cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        cfg.checks.push("A4".into());
        assert!(matches!(
            cfg.validate(&reg),
            Err(ConfigError::UnknownCheck(_))
        ));
        cfg.checks.pop();
        cfg.generating_function.id = "nope".into();
        assert!(matches!(cfg.validate(&reg), Err(ConfigError::UnknownId(_))));
        assert!(matches!(
            ScenarioConfig::from_toml("checks = 3"),
            Err(ConfigError::Parse(_))
        ));
    }
}
