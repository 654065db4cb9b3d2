//! Command-line front end of mhdsim: configuration, scenario presets,
//! run orchestration and output files.

pub mod config;
pub mod run;
pub mod scenario;
pub mod snapshot;

use std::path::PathBuf;

pub use config::{parse_config, ConfigError, Mode, RunConfig, Scenario};
pub use run::{run, Summary};

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub max_steps: Option<usize>,
}

/// Parses `text`, applies `overrides` and validates the result.
pub fn load_config(text: &str, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut config: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if let Some(mode) = overrides.mode {
        config.mode = mode;
    }
    if let Some(dir) = &overrides.output {
        config.output_dir = dir.clone();
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(cap) = overrides.max_steps {
        config.max_steps = Some(cap);
    }
    let violations = config.violations();
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Validation(violations))
    }
}
