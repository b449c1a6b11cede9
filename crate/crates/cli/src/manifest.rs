use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::output::write_json;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub version: &'static str,
    pub scheme: String,
    pub grid: Vec<usize>,
    pub scenario: Option<String>,
    pub threads: usize,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
    pub exit_code: u8,
    /// Command-specific summary (termination, failing identities, ...).
    pub summary: Value,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION"),
            scheme: config.grid.scheme.to_string(),
            grid: Vec::new(),
            scenario: None,
            threads: rayon::current_num_threads(),
            outputs: Vec::new(),
            exit_code: 0,
            summary: Value::Null,
            wall_clock_seconds: 0.0,
        }
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        write_json(&out.join("manifest.json"), self)
    }
}
