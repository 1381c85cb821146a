//! Run manifests and timing files.

use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;

/// Reproducibility record of one run. Contains no wall-clock data, so reruns
/// with the same configuration produce identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub cli_version: String,
    pub core_version: String,
    pub config_sha256: String,
    pub seed: u64,
    /// How per-unit random streams derive from the seed.
    pub seed_policy: String,
    pub failures: usize,
    /// Output files of the run, including `timing.json`.
    pub outputs: Vec<String>,
    pub details: Value,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, seed_policy: &str) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            cli_version: env!("CARGO_PKG_VERSION").into(),
            core_version: hsmm_core::VERSION.into(),
            config_sha256: cfg.hash()?,
            seed: cfg.seed,
            seed_policy: seed_policy.into(),
            failures: 0,
            outputs: Vec::new(),
            details: Value::Null,
            config: cfg.clone(),
        })
    }

    /// Writes `manifest.json` and `timing.json` into `dir`.
    pub fn write(mut self, dir: &Path, phases: &[(&str, Duration)]) -> Result<()> {
        self.outputs.push("manifest.json".into());
        self.outputs.push("timing.json".into());
        self.outputs.sort();
        let text = serde_json::to_string_pretty(&self)? + "\n";
        std::fs::write(dir.join("manifest.json"), text).context("cannot write manifest.json")?;

        let total: f64 = phases.iter().map(|(_, d)| d.as_secs_f64()).sum();
        let timing = serde_json::json!({
            "command": self.command,
            "wall_clock_seconds": total,
            "phases": phases
                .iter()
                .map(|(name, d)| serde_json::json!({ "phase": name, "seconds": d.as_secs_f64() }))
                .collect::<Vec<_>>(),
        });
        std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")
            .context("cannot write timing.json")
    }
}
