//! `manifest.json`: what was run, with which settings, and how it ended.

use std::path::{Path, PathBuf};

use pvseg_core::{LossBreakdown, StopReason, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub config: TrainConfig,
    pub invert_gray: bool,
    pub stop_reason: Option<StopReason>,
    pub iterations_run: usize,
    pub unique_clusters_final: Option<usize>,
    pub wall_clock_seconds: f64,
    pub loss_first: Option<LossBreakdown>,
    pub loss_last: Option<LossBreakdown>,
    /// Set when the run did not finish normally; outputs may be incomplete.
    pub partial: bool,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        inputs: Vec<PathBuf>,
        output_dir: &Path,
        config: &TrainConfig,
    ) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            inputs,
            output_dir: output_dir.to_path_buf(),
            config: config.clone(),
            invert_gray: false,
            stop_reason: None,
            iterations_run: 0,
            unique_clusters_final: None,
            wall_clock_seconds: 0.0,
            loss_first: None,
            loss_last: None,
            partial: true,
            error: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CliError::format(path, e.to_string()))
    }
}
