//! Run configurations. Each command reads an optional JSON file, applies
//! flag overrides and writes the effective result next to its outputs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tbd_core::synth::SyntheticSpec;
use tbd_core::tracker::TrackerConfig;
use tbd_core::trajfit::FitParams;

pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Explicit sequence; when absent a one-bounce sequence is generated.
    pub spec: Option<SyntheticSpec>,
    pub seed: u64,
    pub speed: f64,
    pub frames: usize,
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            spec: None,
            seed: 0,
            speed: 30.0,
            frames: 30,
            noise_sigma: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    /// RGBA template; with it the tracker starts from a known object.
    pub template: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    /// Clean background used in place of the warm-up frames.
    pub background: Option<PathBuf>,
    pub debug_dumps: bool,
}

impl RunConfig {
    /// Paths must exist and parameters must be in range.
    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        for p in [&self.template, &self.frames, &self.background].into_iter().flatten() {
            anyhow::ensure!(p.exists(), "{} does not exist", p.display());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub fit: FitParams,
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn dump<T: Serialize>(config: &T, dir: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(config)?;
    std::fs::write(dir.join(CONFIG_FILE), text + "\n").with_context(|| format!("writing config to {}", dir.display()))
}
