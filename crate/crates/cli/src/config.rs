use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use lagflow_core::flow::FlowConfig;
use lagflow_core::{make_scenario, ParamGrid, Scenario, Scheme};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Run configuration as read from a JSON file and patched by flags.
///
/// The manifest echoes this struct after all overrides, so feeding the echo
/// back through `--config` reproduces the run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario name, optionally with positional arguments: `circle(1.5)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Named scenario parameters; these win over positional ones.
    #[serde(skip_serializing_if = "Value::is_null")]
    pub params: Value,
    pub grid: GridConfig,
    pub flow: FlowConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes per parameter axis.
    pub n: usize,
    pub scheme: Scheme,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 64,
            scheme: Scheme::Spectral,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn scenario(&self) -> Result<Option<Scenario>> {
        self.scenario
            .as_deref()
            .map(|name| make_scenario(name, &self.params))
            .transpose()
            .context("building scenario")
    }

    pub fn grid_for(&self, scenario: &Scenario) -> Result<ParamGrid> {
        ParamGrid::cube(scenario.dim(), self.grid.n, self.grid.scheme).context("building grid")
    }
}
