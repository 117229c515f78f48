//! Per-invocation provenance: resolved configuration, seeds, input hashes,
//! and wall-clock stage timings.

use mew_core::precompute::fnv1a64_file;
use mew_core::Result;
use serde::Serialize;
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub timings_seconds: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: Value::Null,
            seeds: BTreeMap::new(),
            input_hashes: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings_seconds: BTreeMap::new(),
        }
    }

    pub fn hash_input(&mut self, name: &str, path: &Path) -> Result<()> {
        self.input_hashes.insert(name.to_string(), format!("fnv1a64:{}", fnv1a64_file(path)?));
        Ok(())
    }

    pub fn output(&mut self, name: &str, value: impl Into<String>) {
        self.outputs.insert(name.to_string(), value.into());
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Accumulates named wall-clock stages.
pub struct Stopwatch {
    started: Instant,
    stage_started: Instant,
    pub stages: BTreeMap<String, f64>,
}

impl Stopwatch {
    pub fn start() -> Self {
        let now = Instant::now();
        Stopwatch { started: now, stage_started: now, stages: BTreeMap::new() }
    }

    /// Close the current stage under `name` and start the next one.
    pub fn lap(&mut self, name: &str) -> f64 {
        let now = Instant::now();
        let secs = now.duration_since(self.stage_started).as_secs_f64();
        *self.stages.entry(name.to_string()).or_default() += secs;
        self.stage_started = now;
        secs
    }

    pub fn finish(mut self) -> BTreeMap<String, f64> {
        let total = self.started.elapsed().as_secs_f64();
        self.stages.insert("total".into(), total);
        self.stages
    }
}
