//! Settings file: the same keys as the command-line flags. Flags win over
//! the file, the file wins over `DIA_SGN_SEED`, which wins over defaults.

use std::path::Path;

use serde::Deserialize;

use crate::Failure;

pub const SEED_ENV: &str = "DIA_SGN_SEED";
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    // generate
    pub template: Option<String>,
    pub episodes: Option<usize>,
    pub agents: Option<usize>,
    pub duration: Option<f64>,
    // training
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub epochs: Option<usize>,
    pub mixtures: Option<usize>,
    pub beta: Option<f64>,
    pub kreg: Option<f64>,
    pub preset: Option<String>,
    pub ablation: Option<String>,
    pub optimizer: Option<String>,
    pub dropout: Option<f64>,
    // sampling
    pub history: Option<usize>,
    pub stride: Option<usize>,
    pub min_candidates: Option<usize>,
    pub samples: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn seed(&self, flag: Option<u64>) -> Result<u64, Failure> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| Failure::Usage(format!("{SEED_ENV}={v} is not an unsigned integer"))),
            Err(_) => Ok(DEFAULT_SEED),
        }
    }
}

/// Flag, else file value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
