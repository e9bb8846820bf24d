//! `manifest.json`: what was run, with which configuration, and what it
//! produced. Every command merges its results into the manifest of its
//! output directory and rewrites it atomically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub config: Option<RunConfig>,
    /// Member id -> last status reported for it.
    pub members: BTreeMap<u64, String>,
    /// Paths relative to the manifest's directory.
    pub artifacts: Vec<PathBuf>,
    /// Command -> wall-clock seconds of its last run.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        let path = dir.join(FILE);
        if !path.exists() {
            return Ok(RunManifest::default());
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn add_artifact(&mut self, dir: &Path, path: &Path) {
        let rel = path.strip_prefix(dir).unwrap_or(path).to_path_buf();
        if !self.artifacts.contains(&rel) {
            self.artifacts.push(rel);
        }
    }

    /// Drops entries whose file is gone, then writes via a temporary file.
    pub fn save(&mut self, dir: &Path) -> Result<()> {
        self.code_version = env!("CARGO_PKG_VERSION").to_string();
        self.artifacts.retain(|p| dir.join(p).exists());
        self.artifacts.sort();
        let text = serde_json::to_string_pretty(self)?;
        gnse::checkpoint::write_atomic(&dir.join(FILE), text.as_bytes())?;
        Ok(())
    }
}
