//! Settings file and value resolution.
//!
//! A value comes from the first place that has it: command-line flag,
//! environment variable (clap reads both), settings file, built-in default.

use std::path::{Path, PathBuf};

use roadsight_core::annotation::ClassMap;
use roadsight_core::graph::{GraphConfig, DEFAULT_LATENESS_MS, DEFAULT_WINDOW_MS};
use serde::Deserialize;

use crate::error::{read_text, CliError, Result};

/// Contents of the TOML settings file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub classes: Option<PathBuf>,
    pub seed: Option<u64>,
    pub iou: Option<f64>,
    pub confidence: Option<f64>,
    pub fixed_confidence: Option<f64>,
    pub window_ms: Option<i64>,
    pub lateness_ms: Option<i64>,
    pub listen: Option<String>,
    pub cutoff: Option<f64>,
    pub graph: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = read_text(path)?;
        let mut cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.classes, &mut cfg.graph].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// True when the `CI` environment variable is set to something truthy.
pub fn ci_mode() -> bool {
    std::env::var("CI").is_ok_and(|v| !v.is_empty() && v != "0" && !v.eq_ignore_ascii_case("false"))
}

/// Seed for randomized commands; CI runs must state one.
pub fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> Result<u64> {
    match flag.or(file.seed) {
        Some(s) => Ok(s),
        None if ci_mode() => Err(CliError::Usage(
            "--seed (or ROADSIGHT_SEED / `seed` in the settings file) is required when CI is set"
                .into(),
        )),
        None => {
            log::warn!("no seed given, using 0");
            Ok(0)
        }
    }
}

pub fn load_classes(flag: Option<&Path>, file: &FileConfig) -> Result<ClassMap> {
    match flag.or(file.classes.as_deref()) {
        Some(path) => {
            ClassMap::from_lines(&read_text(path)?).map_err(|e| CliError::annotation(path, e))
        }
        None => Ok(ClassMap::vehicles()),
    }
}

/// A threshold in (0, 1].
pub fn check_unit(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!(
            "{name} must be in (0, 1], got {v}"
        )))
    }
}

pub fn graph_config(
    window_ms: Option<i64>,
    lateness_ms: Option<i64>,
    file: &FileConfig,
) -> Result<GraphConfig> {
    let cfg = GraphConfig {
        window_ms: window_ms.or(file.window_ms).unwrap_or(DEFAULT_WINDOW_MS),
        lateness_ms: Some(
            lateness_ms
                .or(file.lateness_ms)
                .unwrap_or(DEFAULT_LATENESS_MS),
        ),
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}
