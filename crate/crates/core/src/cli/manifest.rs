use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one invocation, written before any computation starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    /// Resolved settings with every default filled in.
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, threads: Option<usize>, config: serde_json::Value) -> Self {
        Self {
            tool: "unicom".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            threads,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            config,
        }
    }

    pub fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.into(), path.display().to_string());
        self
    }

    pub fn outputs(mut self, files: &[&str]) -> Self {
        self.outputs = files.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}
