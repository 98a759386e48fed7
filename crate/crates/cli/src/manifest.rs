use std::path::{Path, PathBuf};

use serde::Serialize;
use xlmimo::harness::RunConfig;

use crate::CliError;

/// Record of one command invocation, written next to its main output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub tool_version: &'static str,
    pub seed: u64,
    pub config_hash: String,
    pub deterministic: bool,
    /// Fully resolved configuration, defaults included.
    pub config: RunConfig,
    pub artifacts: Vec<PathBuf>,
    pub notes: Vec<String>,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, deterministic: bool) -> Self {
        RunManifest {
            command: command.to_string(),
            arguments: std::env::args().skip(1).collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config_hash: config.hash(),
            deterministic,
            config: config.clone(),
            artifacts: Vec::new(),
            notes: Vec::new(),
            wall_seconds: 0.0,
        }
    }

    /// `<out>.manifest.json`.
    pub fn path_for(out: &Path) -> PathBuf {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        let path = Self::path_for(out);
        let json = serde_json::to_string_pretty(self).expect("manifest serialises");
        std::fs::write(&path, json + "\n").map_err(|source| CliError::Io {
            context: format!("writing {}", path.display()),
            source,
        })?;
        Ok(path)
    }
}
