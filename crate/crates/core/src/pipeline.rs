//! Frame labeling: map, pose, calibration and mask in, `.clabel.json` out.
//!
//! Labeling runs in two stages. [`FrameLabeler::candidates`] produces the
//! geometrically filtered centerlines of a frame with every keypoint still
//! attached, and [`finalize`] applies an occlusion threshold, refits the
//! image splines and encodes BEV targets. Finalizing an unthresholded label
//! file later gives the same bytes as thresholding during generation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{GeomError, Pose, Trajectory, Vec3};
use crate::ingest::{Calibration, SemanticMask, VectorMap};
use crate::labelgen::bev::camera_to_bev;
use crate::labelgen::record::{BevRecord, CenterlineRecord, ClabelFile};
use crate::labelgen::{
    encode_bev, fit_spline_2d, geometric_filters, project_samples, resample_3d, BevGridSpec, CenterlineLabel,
    FilterParams, LabelError,
};
use crate::occlusion::{check_threshold, is_removed, judge, Category, OcclusionError, OcclusionOntology};

/// Thresholds reported in run statistics.
pub const T_OCC_LADDER: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown camera {0:?}")]
    UnknownCamera(String),
    #[error("pose at {t_ns} ns: {source}")]
    Pose { t_ns: i64, source: GeomError },
    #[error("lane {lane_id}: {source}")]
    Lane { lane_id: i64, source: LabelError },
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Occlusion(#[from] OcclusionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    pub filter: FilterParams,
    /// `None` keeps every candidate with all of its keypoints.
    pub t_occ: Option<f64>,
    /// `None` skips BEV encoding.
    pub grid: Option<BevGridSpec>,
    /// Pixel step of the image-plane spline.
    pub spline_step: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            filter: FilterParams::default(),
            t_occ: Some(0.4),
            grid: Some(BevGridSpec::default()),
            spline_step: 2.0,
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.filter.validate()?;
        if let Some(t) = self.t_occ {
            check_threshold(t)?;
        }
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        if !(self.spline_step.is_finite() && self.spline_step > 0.0) {
            return Err(LabelError::InvalidSpacing(self.spline_step).into());
        }
        Ok(())
    }
}

/// Labels frames of one log. Lane resampling is done once up front.
pub struct FrameLabeler<'a> {
    map: &'a VectorMap,
    samples: Vec<Vec<[f64; 3]>>,
    trajectory: &'a Trajectory,
    calibration: &'a Calibration,
    ontology: &'a OcclusionOntology,
    config: LabelConfig,
}

impl<'a> FrameLabeler<'a> {
    pub fn new(
        map: &'a VectorMap,
        trajectory: &'a Trajectory,
        calibration: &'a Calibration,
        ontology: &'a OcclusionOntology,
        config: LabelConfig,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let samples = map
            .lanes
            .values()
            .map(|lane| {
                resample_3d(&lane.centerline, config.filter.spacing).map_err(|source| PipelineError::Lane {
                    lane_id: lane.lane_id,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            map,
            samples,
            trajectory,
            calibration,
            ontology,
            config,
        })
    }

    pub fn config(&self) -> &LabelConfig {
        &self.config
    }

    fn extrinsic(&self, camera: &str) -> Result<&Pose, PipelineError> {
        self.calibration
            .get(camera)
            .map(|c| &c.extrinsic)
            .ok_or_else(|| PipelineError::UnknownCamera(camera.to_string()))
    }

    /// Geometrically filtered centerlines in lane-id order, keypoints decorated
    /// with classes and `r_occ` set.
    pub fn candidates(&self, camera: &str, t_ns: i64, mask: &SemanticMask) -> Result<Vec<CenterlineLabel>, PipelineError> {
        let cam = self
            .calibration
            .get(camera)
            .ok_or_else(|| PipelineError::UnknownCamera(camera.to_string()))?;
        let ego = self
            .trajectory
            .interpolate(t_ns)
            .map_err(|source| PipelineError::Pose { t_ns, source })?;
        let mut out = Vec::new();
        for (lane, samples) in self.map.lanes.values().zip(&self.samples) {
            let label = project_samples(lane, samples, &ego, cam, mask, self.ontology)?;
            if let Some(mut kept) = geometric_filters(&label, &self.config.filter) {
                let cats: Vec<Category> = kept.keypoints.iter().map(|k| k.category).collect();
                kept.r_occ = Some(judge(&cats, f64::INFINITY).ratio);
                out.push(kept);
            }
        }
        Ok(out)
    }

    pub fn label_frame(&self, camera: &str, t_ns: i64, mask: &SemanticMask) -> Result<FrameLabels, PipelineError> {
        let candidates = self.candidates(camera, t_ns, mask)?;
        let ratios = candidates.iter().map(|c| c.r_occ.unwrap_or(0.0)).collect();
        let mut clabel = finalize(
            &t_ns.to_string(),
            camera,
            [mask.width(), mask.height()],
            &candidates,
            self.ontology,
            self.extrinsic(camera)?,
            &self.config,
        )?;
        if !clabel.centerlines.is_empty() {
            self.attach_boundaries(&mut clabel, camera, t_ns)?;
        }
        Ok(FrameLabels { clabel, ratios })
    }

    fn attach_boundaries(&self, clabel: &mut ClabelFile, camera: &str, t_ns: i64) -> Result<(), PipelineError> {
        let cam = self
            .calibration
            .get(camera)
            .ok_or_else(|| PipelineError::UnknownCamera(camera.to_string()))?;
        let ego = self
            .trajectory
            .interpolate(t_ns)
            .map_err(|source| PipelineError::Pose { t_ns, source })?;
        let to_cam = cam.city_to_camera_transform(&ego);
        let moved = |b: &Option<Vec<[f64; 3]>>| {
            b.as_ref().map(|pts| {
                pts.iter()
                    .map(|p| {
                        let q = to_cam.transform_point(&Vec3::from(*p));
                        [q.x, q.y, q.z]
                    })
                    .collect()
            })
        };
        for c in &mut clabel.centerlines {
            if let Some(lane) = self.map.lanes.get(&c.lane_id) {
                c.left_boundary = moved(&lane.left_boundary);
                c.right_boundary = moved(&lane.right_boundary);
            }
        }
        Ok(())
    }
}

/// A finished frame plus the occlusion ratio of every candidate centerline.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabels {
    pub clabel: ClabelFile,
    pub ratios: Vec<f64>,
}

/// Applies the occlusion threshold, fits image splines and encodes BEV targets.
///
/// Categories are recomputed from class IDs with `ontology`.
pub fn finalize(
    frame_id: &str,
    camera: &str,
    image_size: [u32; 2],
    candidates: &[CenterlineLabel],
    ontology: &OcclusionOntology,
    extrinsic: &Pose,
    config: &LabelConfig,
) -> Result<ClabelFile, PipelineError> {
    config.validate()?;
    let mut centerlines = Vec::new();
    let mut bev_lanes = Vec::new();
    for c in candidates {
        let mut keypoints = c.keypoints.clone();
        for k in &mut keypoints {
            k.category = ontology.categorize(k.class_id);
        }
        let cats: Vec<Category> = keypoints.iter().map(|k| k.category).collect();
        let verdict = judge(&cats, config.t_occ.unwrap_or(f64::INFINITY));
        if verdict.removed {
            continue;
        }
        if config.t_occ.is_some() {
            keypoints = verdict.kept.iter().map(|&j| keypoints[j]).collect();
        }
        let label = CenterlineLabel {
            lane_id: c.lane_id,
            is_intersection: c.is_intersection,
            keypoints,
            r_occ: Some(verdict.ratio),
        };
        let spline = if label.keypoints.len() >= 2 {
            let pixels: Vec<[f64; 2]> = label.keypoints.iter().map(|k| k.pixel()).collect();
            fit_spline_2d(&pixels, config.spline_step).unwrap_or_default()
        } else {
            Vec::new()
        };
        bev_lanes.push(
            label
                .keypoints
                .iter()
                .map(|k| camera_to_bev(&Vec3::from(k.p_cam), extrinsic))
                .collect::<Vec<_>>(),
        );
        centerlines.push(CenterlineRecord::from_label(&label, spline));
    }
    let bev = config.grid.map(|g| BevRecord::from(&encode_bev(&bev_lanes, &g)));
    Ok(ClabelFile {
        frame_id: frame_id.to_string(),
        camera: camera.to_string(),
        t_occ_used: config.t_occ,
        image_size,
        centerlines,
        bev,
    })
}

/// Re-thresholds an unthresholded label file.
pub fn refilter(
    label: &ClabelFile,
    ontology: &OcclusionOntology,
    extrinsic: &Pose,
    config: &LabelConfig,
) -> Result<ClabelFile, PipelineError> {
    let candidates: Vec<CenterlineLabel> = label
        .centerlines
        .iter()
        .map(|c| CenterlineLabel {
            lane_id: c.lane_id,
            is_intersection: false,
            keypoints: c.keypoints(),
            r_occ: c.r_occ,
        })
        .collect();
    let mut out = finalize(
        &label.frame_id,
        &label.camera,
        label.image_size,
        &candidates,
        ontology,
        extrinsic,
        config,
    )?;
    for c in &mut out.centerlines {
        if let Some(src) = label.centerlines.iter().find(|s| s.lane_id == c.lane_id) {
            c.left_boundary.clone_from(&src.left_boundary);
            c.right_boundary.clone_from(&src.right_boundary);
        }
    }
    Ok(out)
}

/// Number of candidates kept at each threshold of `ladder`.
pub fn retention(ratios: &[f64], ladder: &[f64]) -> Vec<usize> {
    ladder
        .iter()
        .map(|&t| ratios.iter().filter(|&&r| !is_removed(r, t)).count())
        .collect()
}
