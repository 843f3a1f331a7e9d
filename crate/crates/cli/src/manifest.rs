use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// One record per invocation. `duration_secs` is wall-clock time and is the
/// only field that differs between otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub exit_code: u8,
    pub duration_secs: f64,
}

pub struct Run {
    command: &'static str,
    started: Instant,
    artifacts: Vec<PathBuf>,
}

impl Run {
    pub fn start(command: &'static str) -> Self {
        Self { command, started: Instant::now(), artifacts: Vec::new() }
    }

    pub fn wrote(&mut self, path: &Path) {
        self.artifacts.push(path.to_path_buf());
    }

    /// Writes the manifest to `target`, or beside `primary` as
    /// `<stem>.manifest.json`.
    pub fn finish(
        self,
        config: &impl Serialize,
        seed: u64,
        exit_code: u8,
        primary: &Path,
        target: Option<&Path>,
    ) -> Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config)?,
            seed,
            artifacts: self.artifacts.iter().map(|p| p.display().to_string()).collect(),
            exit_code,
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = target.map_or_else(|| primary.with_extension("manifest.json"), Path::to_path_buf);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
