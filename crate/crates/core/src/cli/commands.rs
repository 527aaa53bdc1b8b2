//! `sample-train`, `decode`, `eval`, `stats` and `synth`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use clf::eval::{match_polylines, MetricSums, MetricsReport};
use clf::heads::bevout::read_bevout;
use clf::heads::decode::decode_bev;
use clf::labelgen::record::ClabelFile;
use clf::labelgen::sample_windows;
use clf::synth::{write_bundle, SceneSpec};

use super::config::RunConfig;
use super::labels::{HEADS_SUFFIX, LABEL_SUFFIX};
use super::manifest::{Counts, Manifest, OutputEntry};
use super::{input_error, list_files, parse_input, parse_json, sha256_hex, stem, to_json_bytes, write_output};

pub const POLYLINE_SUFFIX: &str = ".polylines.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolylineFile {
    pub key: String,
    /// BEV frame: x lateral (right), y forward, z up; meters.
    pub polylines: Vec<Vec<[f64; 3]>>,
}

/// Writes JSON to `out`, or to stdout when no path is given.
fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let bytes = to_json_bytes(value);
    match out {
        Some(p) => write_output(p, &bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes).context("writing to stdout")
        }
    }
}

#[derive(Debug, Serialize)]
struct Sampled {
    seed: u64,
    window: usize,
    frames: Vec<String>,
}

/// Each camera's frames form one sequence, ordered by frame id.
pub fn sample_train(cfg: &RunConfig, labels: &Path) -> Result<()> {
    cfg.validate()?;
    let mut sequences: BTreeMap<String, Vec<(i64, String)>> = BTreeMap::new();
    for path in list_files(labels, LABEL_SUFFIX)? {
        let key = stem(&path, LABEL_SUFFIX);
        let Some((camera, id)) = key.rsplit_once("__") else {
            return Err(input_error(&path, "file name is not <camera>__<frame_id>.clabel.json"));
        };
        let t: i64 = id
            .parse()
            .map_err(|_| input_error(&path, "frame id must be a nanosecond timestamp"))?;
        sequences.entry(camera.to_string()).or_default().push((t, key.clone()));
    }
    let mut frames = Vec::new();
    for (i, seq) in sequences.values_mut().enumerate() {
        seq.sort();
        let picks = sample_windows(seq.len(), cfg.window, cfg.seed.wrapping_add(i as u64));
        frames.extend(picks.into_iter().map(|p| seq[p].1.clone()));
    }
    emit_json(
        &Sampled {
            seed: cfg.seed,
            window: cfg.window,
            frames,
        },
        cfg.out.as_deref(),
    )
}

pub fn decode(cfg: &RunConfig, heads: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let out = cfg.out_dir()?.to_path_buf();
    let files = list_files(heads, HEADS_SUFFIX)?;
    let grid = cfg.grid;
    let outputs = super::with_pool(cfg.jobs, || {
        files
            .par_iter()
            .map(|path| -> Result<(OutputEntry, usize)> {
                let head = parse_input(path, read_bevout)?;
                if (head.s1, head.s2) != (grid.s1(), grid.s2()) {
                    return Err(input_error(
                        path,
                        format!("head grid is {}x{}, expected {}x{}", head.s1, head.s2, grid.s1(), grid.s2()),
                    ));
                }
                let key = stem(path, HEADS_SUFFIX);
                let polylines = decode_bev(&head, &grid, &cfg.decode);
                let n = polylines.len();
                let bytes = to_json_bytes(&PolylineFile { key: key.clone(), polylines });
                let rel = format!("polylines/{key}{POLYLINE_SUFFIX}");
                write_output(&out.join(&rel), &bytes)?;
                Ok((
                    OutputEntry {
                        key,
                        path: rel,
                        sha256: sha256_hex(&bytes),
                    },
                    n,
                ))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let counts = Counts {
        frames: outputs.len(),
        centerlines: outputs.iter().map(|o| o.1).sum(),
        ..Default::default()
    };
    let manifest = Manifest::new("decode", cfg, counts, Vec::new(), outputs.into_iter().map(|o| o.0).collect());
    manifest.write(&out)?;
    Ok(manifest)
}

/// Polylines per frame key from `.polylines.json` and `.clabel.json` files.
fn load_polylines(dir: &Path) -> Result<BTreeMap<String, Vec<Vec<[f64; 3]>>>> {
    let mut out = BTreeMap::new();
    for path in list_files(dir, POLYLINE_SUFFIX)? {
        let f: PolylineFile = parse_json(&path)?;
        out.insert(stem(&path, POLYLINE_SUFFIX), f.polylines);
    }
    for path in list_files(dir, LABEL_SUFFIX)? {
        let label = parse_input(&path, ClabelFile::from_bytes)?;
        let bev = label
            .bev
            .as_ref()
            .ok_or_else(|| input_error(&path, "label has no BEV targets"))?;
        let targets = bev.to_targets().map_err(|e| input_error(&path, e))?;
        let key = stem(&path, LABEL_SUFFIX);
        if out.contains_key(&key) {
            return Err(input_error(&path, format!("frame {key} appears twice")));
        }
        out.insert(key, targets.polylines().into_iter().map(|(_, p)| p).collect());
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FrameRow {
    pub key: String,
    pub metrics: MetricsReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    pub metrics: MetricsReport,
    pub sums: MetricSums,
    pub match_spec: clf::eval::MatchSpec,
    /// X/Z errors are means over matched rows, not over matched lanes.
    pub error_averaging: String,
    pub per_frame: Vec<FrameRow>,
}

/// Frames missing on one side count as empty there.
pub fn eval(cfg: &RunConfig, pred: &Path, gt: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    let pred = load_polylines(pred)?;
    let gt = load_polylines(gt)?;
    let keys: BTreeSet<&String> = pred.keys().chain(gt.keys()).collect();
    let empty = Vec::new();
    let spec = cfg.matching;
    let keys: Vec<&String> = keys.into_iter().collect();
    let per_frame = super::with_pool(cfg.jobs, || {
        keys.par_iter()
            .map(|k| {
                let a = match_polylines(pred.get(*k).unwrap_or(&empty), gt.get(*k).unwrap_or(&empty), &spec);
                MetricSums::from_assignment(&a, &spec)
            })
            .collect::<Vec<_>>()
    })?;
    let sums = per_frame.iter().fold(MetricSums::default(), |acc, s| acc.merge(s));
    let report = EvalReport {
        frames: keys.len(),
        metrics: sums.report(),
        sums,
        match_spec: spec,
        error_averaging: "matched_points".into(),
        per_frame: keys
            .iter()
            .zip(&per_frame)
            .map(|(k, s)| FrameRow {
                key: (*k).clone(),
                metrics: s.report(),
            })
            .collect(),
    };
    emit_json(&report, cfg.out.as_deref())?;
    Ok(report)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatsReport {
    pub splits: BTreeMap<String, usize>,
    pub total_frames: usize,
    pub centerlines: usize,
    pub keypoints: usize,
    /// Bin `i` covers `[i/10, (i+1)/10)`; the last bin includes 1.
    pub r_occ_histogram: Vec<usize>,
}

pub fn stats(manifests: &[PathBuf], out: Option<&Path>) -> Result<StatsReport> {
    let mut report = StatsReport {
        splits: BTreeMap::new(),
        total_frames: 0,
        centerlines: 0,
        keypoints: 0,
        r_occ_histogram: vec![0; 10],
    };
    for path in manifests {
        let m = Manifest::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        *report.splits.entry(m.split.clone()).or_default() += m.counts.frames;
        report.total_frames += m.counts.frames;
        for entry in m.outputs.iter().filter(|o| o.path.ends_with(LABEL_SUFFIX)) {
            let label = parse_input(&base.join(&entry.path), ClabelFile::from_bytes)?;
            for c in &label.centerlines {
                report.centerlines += 1;
                report.keypoints += c.keypoints.len();
                if let Some(r) = c.r_occ {
                    let bin = ((r * 10.0).floor() as usize).min(9);
                    report.r_occ_histogram[bin] += 1;
                }
            }
        }
    }
    emit_json(&report, out)?;
    Ok(report)
}

pub fn synth(spec: &SceneSpec, out: &Path) -> Result<usize> {
    Ok(write_bundle(spec, out)?)
}
