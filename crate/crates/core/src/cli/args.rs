use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use clf::labelgen::BevGridSpec;
use clf::occlusion::Category;
use clf::synth::Occluder;

use super::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "clf", version, about = "Occlusion-aware centerline labels, decoding and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label every frame of a log and write a manifest.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        label: LabelArgs,
        /// Split name recorded in the manifest.
        #[arg(long)]
        split: Option<String>,
        /// Also write perfect head outputs (`.bevout`) for each frame.
        #[arg(long)]
        emit_heads: bool,
    },
    /// Pick one training frame per window of consecutive frames.
    SampleTrain {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory of `.clabel.json` files.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Apply an occlusion threshold to unthresholded label files.
    Filter {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[command(flatten)]
        label: LabelArgs,
    },
    /// Decode `.bevout` head outputs into BEV polylines.
    Decode {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        heads: PathBuf,
        #[arg(long, value_parser = parse_grid)]
        grid: Option<BevGridSpec>,
        #[arg(long)]
        conf_threshold: Option<f64>,
        #[arg(long)]
        embed_radius: Option<f64>,
        #[arg(long)]
        min_cells: Option<usize>,
    },
    /// Score predicted polylines against ground truth.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory of `.polylines.json` predictions.
        #[arg(long)]
        pred: PathBuf,
        /// Directory of `.clabel.json` or `.polylines.json` ground truth.
        #[arg(long)]
        gt: PathBuf,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Draw label files as SVG.
    Render {
        /// A `.clabel.json` file or a directory of them.
        #[arg(long)]
        labels: PathBuf,
        /// Image referenced as the canvas background.
        #[arg(long)]
        image: Option<String>,
        /// Output file (single label) or directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize one or more generated splits.
    Stats {
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic scene bundle with expected labels.
    Synth {
        /// Scene description (JSON); flags override its fields.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        n_lanes: Option<usize>,
        #[arg(long)]
        lane_spacing: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        curvature: Option<f64>,
        #[arg(long)]
        lane_length: Option<f64>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// `lane,start,end,category`, repeatable.
        #[arg(long = "occluder", value_parser = parse_occluder)]
        occluders: Vec<Occluder>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config file (or a manifest from an earlier run).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs serially.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Bundle directory with default file names.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub masks: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Occlusion threshold, or `none` to keep everything.
    #[arg(long, value_parser = parse_t_occ)]
    pub t_occ: Option<TOcc>,
    #[arg(long)]
    pub ontology: Option<PathBuf>,
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<BevGridSpec>,
    /// Skip BEV target encoding.
    #[arg(long)]
    pub no_bev: bool,
    #[arg(long)]
    pub spacing: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<f64>,
    #[arg(long)]
    pub min_px_gap: Option<f64>,
    #[arg(long)]
    pub min_keypoints: Option<usize>,
    #[arg(long)]
    pub min_length: Option<f64>,
    #[arg(long)]
    pub spline_step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub match_threshold: Option<f64>,
    #[arg(long, value_parser = parse_band)]
    pub near: Option<[f64; 2]>,
    #[arg(long, value_parser = parse_band)]
    pub far: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy)]
pub struct TOcc(pub Option<f64>);

fn parse_t_occ(s: &str) -> Result<TOcc, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(TOcc(None));
    }
    let t: f64 = s.parse().map_err(|_| format!("expected a number or `none`, got {s:?}"))?;
    if t.is_nan() || t < 0.0 {
        return Err(format!("threshold must be non-negative, got {t}"));
    }
    Ok(TOcc(Some(t)))
}

fn numbers(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number {p:?}")))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", v.len()));
    }
    Ok(v)
}

fn parse_grid(s: &str) -> Result<BevGridSpec, String> {
    let v = numbers(s, 5)?;
    BevGridSpec::new(v[0], v[1], v[2], v[3], v[4]).map_err(|e| e.to_string())
}

fn parse_band(s: &str) -> Result<[f64; 2], String> {
    let v = numbers(s, 2)?;
    if !(v[0] < v[1]) {
        return Err(format!("band {s:?} must satisfy lo < hi"));
    }
    Ok([v[0], v[1]])
}

fn parse_occluder(s: &str) -> Result<Occluder, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [lane, start, end, cat] = parts[..] else {
        return Err("expected lane,start,end,category".into());
    };
    let category = match cat {
        "valid" => Category::Valid,
        "occlusion_valid" => Category::OcclusionValid,
        "invalid" => Category::Invalid,
        _ => return Err(format!("unknown category {cat:?}")),
    };
    Ok(Occluder {
        lane: lane.parse().map_err(|_| format!("bad lane index {lane:?}"))?,
        start: start.parse().map_err(|_| format!("bad start {start:?}"))?,
        end: end.parse().map_err(|_| format!("bad end {end:?}"))?,
        category,
    })
}

impl CommonArgs {
    /// Config file (if any) with these flags applied on top.
    pub fn base_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(j) = self.jobs {
            if j == 0 {
                bail!("--jobs must be at least 1");
            }
            cfg.jobs = j;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        Ok(cfg)
    }
}

impl InputArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let set = |dst: &mut Option<PathBuf>, src: &Option<PathBuf>| {
            if src.is_some() {
                dst.clone_from(src);
            }
        };
        set(&mut cfg.input, &self.input);
        set(&mut cfg.map, &self.map);
        set(&mut cfg.trajectory, &self.trajectory);
        set(&mut cfg.calibration, &self.calibration);
        set(&mut cfg.masks, &self.masks);
    }
}

impl LabelArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(TOcc(t)) = self.t_occ {
            cfg.t_occ = t;
        }
        if self.ontology.is_some() {
            cfg.ontology.clone_from(&self.ontology);
        }
        if let Some(g) = self.grid {
            cfg.grid = g;
        }
        if self.no_bev {
            cfg.bev = false;
        }
        let f = &mut cfg.filter;
        f.spacing = self.spacing.unwrap_or(f.spacing);
        f.max_depth = self.max_depth.unwrap_or(f.max_depth);
        f.min_px_gap = self.min_px_gap.unwrap_or(f.min_px_gap);
        f.min_keypoints = self.min_keypoints.unwrap_or(f.min_keypoints);
        f.min_length = self.min_length.unwrap_or(f.min_length);
        cfg.spline_step = self.spline_step.unwrap_or(cfg.spline_step);
    }
}

impl MatchArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let m = &mut cfg.matching;
        m.match_threshold = self.match_threshold.unwrap_or(m.match_threshold);
        m.near_band = self.near.unwrap_or(m.near_band);
        m.far_band = self.far.unwrap_or(m.far_band);
    }
}
