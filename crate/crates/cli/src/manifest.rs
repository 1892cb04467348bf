//! Run manifests: every invocation records its command line, resolved
//! configuration, seed, version and outputs, enough to reproduce the run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use crate::output::write_json;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Full argv of the invocation.
    pub command: Vec<String>,
    /// The resolved configuration as TOML text ("" when running purely on
    /// built-in presets).
    pub resolved_config: String,
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

pub struct ManifestBuilder {
    started: Instant,
    command: Vec<String>,
    resolved_config: String,
    seed: Option<u64>,
    outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(resolved_config: String) -> Self {
        Self {
            started: Instant::now(),
            command: std::env::args().collect(),
            resolved_config,
            seed: None,
            outputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes `<base>.manifest.json` and returns its path.
    pub fn write(self, base: &Path) -> Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command,
            resolved_config: self.resolved_config,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let path = base.with_extension("manifest.json");
        write_json(&path, &manifest)?;
        Ok(path)
    }
}
