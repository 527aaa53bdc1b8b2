use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use clf::pipeline::{retention, T_OCC_LADDER};

use super::config::RunConfig;
use super::{sha256_hex, to_json_bytes, write_output};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub frames: usize,
    /// Centerlines that passed the geometric filters.
    pub candidates: usize,
    /// Centerlines written after occlusion filtering.
    pub centerlines: usize,
    pub keypoints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retention {
    pub t_occ: f64,
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub key: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub split: String,
    pub config: RunConfig,
    pub counts: Counts,
    pub retention: Vec<Retention>,
    pub outputs: Vec<OutputEntry>,
    /// Digest of everything above except settings that cannot change outputs.
    pub hash: String,
}

#[derive(Serialize)]
struct Hashed<'a> {
    command: &'a str,
    split: &'a str,
    config: RunConfig,
    counts: &'a Counts,
    retention: &'a [Retention],
    outputs: &'a [OutputEntry],
}

/// Retained counts over the standard ladder plus the configured threshold.
pub fn retention_table(ratios: &[f64], t_occ: Option<f64>) -> Vec<Retention> {
    let mut ladder = T_OCC_LADDER.to_vec();
    if let Some(t) = t_occ {
        if !ladder.contains(&t) {
            ladder.push(t);
            ladder.sort_by(f64::total_cmp);
        }
    }
    ladder
        .iter()
        .zip(retention(ratios, &ladder))
        .map(|(&t_occ, retained)| Retention { t_occ, retained })
        .collect()
}

impl Manifest {
    pub fn new(
        command: &str,
        config: &RunConfig,
        counts: Counts,
        retention: Vec<Retention>,
        outputs: Vec<OutputEntry>,
    ) -> Self {
        let hashed = Hashed {
            command,
            split: &config.split,
            config: config.canonical(),
            counts: &counts,
            retention: &retention,
            outputs: &outputs,
        };
        let hash = sha256_hex(&serde_json::to_vec(&hashed).expect("serializable"));
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            split: config.split.clone(),
            config: config.clone(),
            counts,
            retention,
            outputs,
            hash,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_output(&dir.join(MANIFEST_NAME), &to_json_bytes(self))
    }

    pub fn load(path: &Path) -> Result<Self> {
        super::parse_json(path)
    }
}
