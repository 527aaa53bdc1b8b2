//! Effective run configuration: flags over config file over defaults.

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};

use clf::eval::MatchSpec;
use clf::heads::decode::DecodeParams;
use clf::labelgen::{BevGridSpec, FilterParams};
use clf::occlusion::check_threshold;
use clf::pipeline::LabelConfig;

use super::{input_error, parse_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bundle directory holding the map, trajectory, calibration and `masks/`.
    pub input: Option<PathBuf>,
    pub map: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// `null` keeps every centerline and every keypoint.
    pub t_occ: Option<f64>,
    pub ontology: Option<PathBuf>,
    pub grid: BevGridSpec,
    pub bev: bool,
    pub filter: FilterParams,
    pub spline_step: f64,
    pub matching: MatchSpec,
    pub decode: DecodeParams,
    pub seed: u64,
    pub window: usize,
    pub jobs: usize,
    pub split: String,
    pub emit_heads: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let label = LabelConfig::default();
        Self {
            input: None,
            map: None,
            trajectory: None,
            calibration: None,
            masks: None,
            out: None,
            t_occ: label.t_occ,
            ontology: None,
            grid: BevGridSpec::default(),
            bev: true,
            filter: label.filter,
            spline_step: label.spline_step,
            matching: MatchSpec::default(),
            decode: DecodeParams::default(),
            seed: 0,
            window: 20,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            split: "all".into(),
            emit_heads: false,
        }
    }
}

impl RunConfig {
    /// Loads a config file. A manifest is accepted too; its `config` is used.
    pub fn load(path: &Path) -> Result<Self> {
        let value: serde_json::Value = parse_json(path)?;
        let inner = match value.get("config") {
            Some(c) if value.get("outputs").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| input_error(path, e))
    }

    pub fn label_config(&self) -> LabelConfig {
        LabelConfig {
            filter: self.filter,
            t_occ: self.t_occ,
            grid: self.bev.then_some(self.grid),
            spline_step: self.spline_step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(anyhow::anyhow!("invalid configuration: {m}"));
        if let Some(t) = self.t_occ {
            if let Err(e) = check_threshold(t) {
                return bad(e.to_string());
            }
        }
        if let Err(e) = self.label_config().validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.grid.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.matching.validate() {
            return bad(e);
        }
        if self.window == 0 {
            return bad("window must be positive".into());
        }
        Ok(())
    }

    /// Bundle-relative default for an input path.
    pub fn resolve(&self, explicit: &Option<PathBuf>, bundle_name: &str, what: &str) -> Result<PathBuf> {
        match (explicit, &self.input) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(dir)) => Ok(dir.join(bundle_name)),
            (None, None) => Err(anyhow::anyhow!("no {what} given; pass --{what} or --input")),
        }
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| anyhow::anyhow!("no output location given; pass --out"))
    }

    /// The configuration with settings that cannot change outputs cleared.
    pub fn canonical(&self) -> Self {
        Self {
            jobs: 0,
            out: None,
            ..self.clone()
        }
    }
}
