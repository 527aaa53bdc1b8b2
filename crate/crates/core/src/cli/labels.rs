//! `generate` and `filter`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use log::{debug, info};
use rayon::prelude::*;

use clf::heads::bevout::write_bevout;
use clf::heads::{HeadOutput, DEFAULT_EMBED_DIM};
use clf::ingest::{parse_calibration, parse_map, parse_mask, parse_trajectory, Calibration};
use clf::labelgen::record::{frame_key, ClabelFile};
use clf::occlusion::{judge, Category, OcclusionOntology};
use clf::pipeline::{refilter, FrameLabeler};

use super::config::RunConfig;
use super::manifest::{retention_table, Counts, Manifest, OutputEntry};
use super::{input_error, list_files, parse_input, require_dir, sha256_hex, stem, write_output};

pub const LABEL_SUFFIX: &str = ".clabel.json";
pub const HEADS_SUFFIX: &str = ".bevout";
/// Embedding distance between instances in emitted head outputs.
const HEAD_SPREAD: f64 = 10.0;

struct Frame {
    camera: String,
    t_ns: i64,
    mask: PathBuf,
}

impl Frame {
    fn key(&self) -> String {
        frame_key(&self.camera, &self.t_ns.to_string())
    }
}

struct Labeled {
    outputs: Vec<OutputEntry>,
    ratios: Vec<f64>,
    centerlines: usize,
    keypoints: usize,
}

pub fn load_ontology(cfg: &RunConfig) -> Result<OcclusionOntology> {
    match &cfg.ontology {
        Some(p) => parse_input(p, OcclusionOntology::from_json),
        None => Ok(OcclusionOntology::default()),
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(input_error(path, "no such file"))
    }
}

/// Frames are `masks/<camera>/<t_ns>.smask`, ordered by camera then time.
fn discover_frames(masks: &Path, calibration: &Calibration) -> Result<Vec<Frame>> {
    require_dir(masks)?;
    let mut cameras: Vec<PathBuf> = std::fs::read_dir(masks)
        .map_err(|e| input_error(masks, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    cameras.sort();
    let mut frames = Vec::new();
    for dir in cameras {
        let camera = stem(&dir, "");
        if calibration.get(&camera).is_none() {
            return Err(input_error(&dir, format!("camera {camera:?} is not in the calibration")));
        }
        let mut cam_frames = Vec::new();
        for mask in list_files(&dir, ".smask")? {
            let t_ns: i64 = stem(&mask, ".smask")
                .parse()
                .map_err(|_| input_error(&mask, "mask file name must be a nanosecond timestamp"))?;
            cam_frames.push(Frame {
                camera: camera.clone(),
                t_ns,
                mask,
            });
        }
        cam_frames.sort_by_key(|f| f.t_ns);
        frames.extend(cam_frames);
    }
    Ok(frames)
}

fn label_path(key: &str) -> String {
    format!("labels/{key}{LABEL_SUFFIX}")
}

fn emit(out: &Path, rel: String, key: &str, bytes: &[u8]) -> Result<OutputEntry> {
    write_output(&out.join(&rel), bytes)?;
    Ok(OutputEntry {
        key: key.to_string(),
        path: rel,
        sha256: sha256_hex(bytes),
    })
}

fn emit_label(out: &Path, clabel: &ClabelFile, heads: bool) -> Result<Vec<OutputEntry>> {
    let key = clabel.key();
    let mut entries = vec![emit(out, label_path(&key), &key, &clabel.to_bytes())?];
    if heads {
        if let Some(bev) = &clabel.bev {
            let targets = bev.to_targets().map_err(|e| anyhow!(e))?;
            let head = HeadOutput::from_targets(&targets, DEFAULT_EMBED_DIM, HEAD_SPREAD);
            entries.push(emit(out, format!("heads/{key}{HEADS_SUFFIX}"), &key, &write_bevout(&head))?);
        }
    }
    Ok(entries)
}

fn summarize(command: &str, cfg: &RunConfig, results: Vec<Labeled>) -> Manifest {
    let mut counts = Counts {
        frames: results.len(),
        ..Default::default()
    };
    let mut ratios = Vec::new();
    let mut outputs = Vec::new();
    for r in results {
        counts.candidates += r.ratios.len();
        counts.centerlines += r.centerlines;
        counts.keypoints += r.keypoints;
        ratios.extend(r.ratios);
        outputs.extend(r.outputs);
    }
    Manifest::new(command, cfg, counts, retention_table(&ratios, cfg.t_occ), outputs)
}

fn count_keypoints(c: &ClabelFile) -> usize {
    c.centerlines.iter().map(|l| l.keypoints.len()).sum()
}

pub fn generate(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let out = cfg.out_dir()?.to_path_buf();
    let map_path = cfg.resolve(&cfg.map, "map.cmap.json", "map")?;
    let traj_path = cfg.resolve(&cfg.trajectory, "trajectory.traj.json", "trajectory")?;
    let calib_path = cfg.resolve(&cfg.calibration, "calibration.calib.json", "calibration")?;
    let masks = cfg.resolve(&cfg.masks, "masks", "masks")?;
    for p in [&map_path, &traj_path, &calib_path] {
        require_file(p)?;
    }
    require_dir(&masks)?;

    let ontology = load_ontology(cfg)?;
    let map = parse_input(&map_path, parse_map)?;
    let trajectory = parse_input(&traj_path, parse_trajectory)?;
    let calibration = parse_input(&calib_path, parse_calibration)?;
    let frames = discover_frames(&masks, &calibration)?;
    info!("labeling {} frames with {} workers", frames.len(), cfg.jobs);

    let labeler = FrameLabeler::new(&map, &trajectory, &calibration, &ontology, cfg.label_config())
        .context("preparing map lanes")?;
    let results = super::with_pool(cfg.jobs, || {
        frames
            .par_iter()
            .map(|f| -> Result<Labeled> {
                let mask = parse_input(&f.mask, parse_mask)?;
                let labels = labeler
                    .label_frame(&f.camera, f.t_ns, &mask)
                    .with_context(|| format!("frame {}", f.key()))?;
                debug!("{}: {} centerlines", f.key(), labels.clabel.centerlines.len());
                Ok(Labeled {
                    outputs: emit_label(&out, &labels.clabel, cfg.emit_heads)?,
                    centerlines: labels.clabel.centerlines.len(),
                    keypoints: count_keypoints(&labels.clabel),
                    ratios: labels.ratios,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let manifest = summarize("generate", cfg, results);
    manifest.write(&out)?;
    Ok(manifest)
}

pub fn filter(cfg: &RunConfig, labels_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let out = cfg.out_dir()?.to_path_buf();
    let calib_path = cfg
        .calibration
        .clone()
        .ok_or_else(|| anyhow!("no calibration given; pass --calibration"))?;
    require_file(&calib_path)?;
    let calibration = parse_input(&calib_path, parse_calibration)?;
    let ontology = load_ontology(cfg)?;
    let files = list_files(labels_dir, LABEL_SUFFIX)?;
    let label_cfg = cfg.label_config();

    let results = super::with_pool(cfg.jobs, || {
        files
            .par_iter()
            .map(|path| -> Result<Labeled> {
                let input = parse_input(path, ClabelFile::from_bytes)?;
                if let Some(t) = input.t_occ_used {
                    return Err(input_error(path, format!("labels were already thresholded at {t}")));
                }
                let cam = calibration
                    .get(&input.camera)
                    .ok_or_else(|| input_error(path, format!("camera {:?} is not in the calibration", input.camera)))?;
                let ratios = input
                    .centerlines
                    .iter()
                    .map(|c| {
                        let cats: Vec<Category> = c.keypoints.iter().map(|k| ontology.categorize(k.class_id)).collect();
                        judge(&cats, f64::INFINITY).ratio
                    })
                    .collect();
                let filtered = refilter(&input, &ontology, &cam.extrinsic, &label_cfg)
                    .with_context(|| format!("frame {}", input.key()))?;
                Ok(Labeled {
                    outputs: emit_label(&out, &filtered, cfg.emit_heads)?,
                    centerlines: filtered.centerlines.len(),
                    keypoints: count_keypoints(&filtered),
                    ratios,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let manifest = summarize("filter", cfg, results);
    manifest.write(&out)?;
    Ok(manifest)
}
