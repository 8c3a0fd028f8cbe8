use std::path::{Path, PathBuf};

use bits_core::design::DesignConfig;
use bits_core::distillation::ColumnSpec;
use bits_core::vle::BinarySystem;
use bits_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "BITS_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseConfig {
    /// Liquid compositions on an even grid over [0, 1].
    pub points: usize,
    /// Posterior realizations drawn for surrogate curves.
    pub samples: usize,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            points: 50,
            samples: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Thermodynamic system file; relative paths resolve against the config
    /// file's directory.
    pub system: PathBuf,
    /// History directory, resolved like `system`.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub design: DesignConfig,
    /// Checked by the column command, where an infeasible column is a
    /// specification error rather than a configuration error.
    #[serde(default)]
    pub column: ColumnSpec,
    #[serde(default)]
    pub phase: PhaseConfig,
}

pub struct Loaded {
    pub config: RunConfig,
    pub system: BinarySystem,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config: RunConfig =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "{}: schema_version {} is not supported (expected {SCHEMA_VERSION})",
            path.display(),
            config.schema_version
        )));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    config.system = resolve(base, &config.system);
    config.output_dir = resolve(base, &config.output_dir);
    if let Ok(seed) = std::env::var(SEED_ENV) {
        config.design.seed = seed.trim().parse().map_err(|_| {
            Error::Config(format!("{SEED_ENV}='{seed}' is not an unsigned integer"))
        })?;
    }
    config.design.validate()?;
    if config.phase.points < 2 || config.phase.samples == 0 {
        return Err(Error::Config(
            "phase: need at least 2 points and 1 sample".into(),
        ));
    }
    let system = BinarySystem::from_json_file(&config.system)?;
    Ok(Loaded { config, system })
}
