//! `manifest.json`: resolved config, versions, and per-stage artifacts and
//! wall-clock times. Each command rewrites it atomically when it finishes.
//! Timings vary between runs, so it is the one output that is not
//! byte-reproducible.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;
use crate::layout::{write_atomic, Layout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seeds: Vec<u64>,
    pub artifacts: Vec<String>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub versions: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("blood-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("blood-core".to_string(), blood_core::VERSION.to_string()),
        (
            "model-format".to_string(),
            String::from_utf8_lossy(blood_core::network::MAGIC).into_owned(),
        ),
    ])
}

/// Records `stage` in the manifest, keeping the entries of other stages.
/// An unreadable previous manifest is replaced.
pub fn record_stage(layout: &Layout, cfg: &RunConfig, stage: &str, record: StageRecord) -> Result<()> {
    let path = layout.manifest();
    let previous = std::fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str::<RunManifest>(&t).ok());
    let mut stages = previous.map(|m| m.stages).unwrap_or_default();
    stages.insert(stage.to_string(), record);
    let manifest = RunManifest {
        config: cfg.clone(),
        versions: versions(),
        stages,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(blood_core::Error::from)?;
    text.push('\n');
    write_atomic(&path, text.as_bytes())
}
