//! Per-frame centerline label factory.
//!
//! A lane's city-frame centerline is resampled along a centripetal
//! Catmull-Rom spline, moved into the camera frame, and projected. Each
//! visible sample becomes a [`Keypoint`] that keeps its pixel and its
//! camera-frame 3D point together, decorated with the semantic class found
//! under it in the frame's mask.

pub mod bev;
pub mod record;
pub mod spline;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{CameraModel, Pose, Vec3};
use crate::ingest::{LaneSegment, SemanticMask};
use crate::occlusion::{lookup_class, Category, OcclusionOntology};

pub use bev::{encode_bev, BevGridSpec, BevTargets};
use spline::CatmullRom;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("polyline needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("polyline has zero length")]
    DegeneratePolyline,
    #[error("sample spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
    #[error("invalid BEV grid: {0}")]
    InvalidGrid(String),
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
    #[error("mask is {mask_w}x{mask_h} but camera image is {cam_w}x{cam_h}")]
    MaskSizeMismatch {
        mask_w: u32,
        mask_h: u32,
        cam_w: u32,
        cam_h: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub u: f64,
    pub v: f64,
    /// Camera-frame point, meters.
    pub p_cam: [f64; 3],
    pub depth: f64,
    pub class_id: u8,
    pub category: Category,
}

impl Keypoint {
    pub fn pixel(&self) -> [f64; 2] {
        [self.u, self.v]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterlineLabel {
    pub lane_id: i64,
    pub is_intersection: bool,
    pub keypoints: Vec<Keypoint>,
    /// Set once occlusion filtering has run.
    pub r_occ: Option<f64>,
}

/// Geometric filter thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    /// 3D resampling step along the lane, meters.
    pub spacing: f64,
    /// Keypoints deeper than this are dropped, meters.
    pub max_depth: f64,
    /// Minimum pixel distance between consecutive kept keypoints.
    pub min_px_gap: f64,
    pub min_keypoints: usize,
    /// Minimum 3D polyline length of the kept keypoints, meters.
    pub min_length: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            spacing: 0.5,
            max_depth: 100.0,
            min_px_gap: 5.0,
            min_keypoints: 2,
            min_length: 3.0,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), LabelError> {
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(LabelError::InvalidSpacing(self.spacing));
        }
        let bad = |what: &str| Err(LabelError::InvalidParams(what.to_string()));
        if self.max_depth.is_nan() || self.max_depth <= 0.0 {
            return bad("max_depth must be positive");
        }
        if !(self.min_px_gap.is_finite() && self.min_px_gap >= 0.0) {
            return bad("min_px_gap must be non-negative");
        }
        if self.min_keypoints < 2 {
            return bad("min_keypoints must be at least 2");
        }
        if !(self.min_length.is_finite() && self.min_length >= 0.0) {
            return bad("min_length must be non-negative");
        }
        Ok(())
    }
}

/// Arc-length-uniform samples along a centripetal Catmull-Rom spline through
/// the polyline. Endpoints are preserved exactly.
pub fn resample_3d(polyline: &[[f64; 3]], spacing: f64) -> Result<Vec<[f64; 3]>, LabelError> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(LabelError::InvalidSpacing(spacing));
    }
    if polyline.len() < 2 {
        return Err(LabelError::TooFewPoints(polyline.len()));
    }
    let spline = CatmullRom::new(polyline).ok_or(LabelError::DegeneratePolyline)?;
    Ok(spline.sample_uniform(spacing))
}

/// Projects pre-resampled city-frame samples of `lane` into a camera.
///
/// Samples behind the camera, off-image, or whose rounded pixel falls outside
/// the mask are dropped; survivors take the class under their rounded pixel.
pub fn project_samples(
    lane: &LaneSegment,
    samples: &[[f64; 3]],
    ego_pose: &Pose,
    cam: &CameraModel,
    mask: &SemanticMask,
    ontology: &OcclusionOntology,
) -> Result<CenterlineLabel, LabelError> {
    if (mask.width(), mask.height()) != (cam.width, cam.height) {
        return Err(LabelError::MaskSizeMismatch {
            mask_w: mask.width(),
            mask_h: mask.height(),
            cam_w: cam.width,
            cam_h: cam.height,
        });
    }
    let to_cam = cam.city_to_camera_transform(ego_pose);
    let keypoints = samples
        .iter()
        .filter_map(|p| {
            let p_cam = to_cam.transform_point(&Vec3::from(*p));
            let proj = cam.project(&p_cam)?;
            let class_id = lookup_class(mask, proj.u, proj.v).ok()?;
            Some(Keypoint {
                u: proj.u,
                v: proj.v,
                p_cam: [p_cam.x, p_cam.y, p_cam.z],
                depth: proj.depth,
                class_id,
                category: ontology.categorize(class_id),
            })
        })
        .collect();
    Ok(CenterlineLabel {
        lane_id: lane.lane_id,
        is_intersection: lane.is_intersection,
        keypoints,
        r_occ: None,
    })
}

/// Resamples, transforms and projects one lane into a camera image.
pub fn project_centerline(
    lane: &LaneSegment,
    ego_pose: &Pose,
    cam: &CameraModel,
    mask: &SemanticMask,
    ontology: &OcclusionOntology,
    spacing: f64,
) -> Result<CenterlineLabel, LabelError> {
    let samples = resample_3d(&lane.centerline, spacing)?;
    project_samples(lane, &samples, ego_pose, cam, mask, ontology)
}

/// Greedy decimation: keep the first point, then every point at least
/// `min_gap` pixels from the last kept one.
pub fn decimate_by_pixel_gap(keypoints: &[Keypoint], min_gap: f64) -> Vec<Keypoint> {
    let mut out: Vec<Keypoint> = Vec::with_capacity(keypoints.len());
    for kp in keypoints {
        let far_enough = out
            .last()
            .is_none_or(|last| spline::distance(&last.pixel(), &kp.pixel()) >= min_gap);
        if far_enough {
            out.push(*kp);
        }
    }
    out
}

pub fn polyline_length(points: impl IntoIterator<Item = [f64; 3]>) -> f64 {
    let mut prev: Option<[f64; 3]> = None;
    let mut total = 0.0;
    for p in points {
        if let Some(q) = prev {
            total += spline::distance(&p, &q);
        }
        prev = Some(p);
    }
    total
}

/// Drops far and tightly packed keypoints; rejects intersection, sparse and
/// short labels.
pub fn geometric_filters(label: &CenterlineLabel, params: &FilterParams) -> Option<CenterlineLabel> {
    if label.is_intersection {
        return None;
    }
    let near: Vec<Keypoint> = label
        .keypoints
        .iter()
        .filter(|k| k.depth <= params.max_depth)
        .copied()
        .collect();
    let keypoints = decimate_by_pixel_gap(&near, params.min_px_gap);
    if keypoints.len() < params.min_keypoints {
        return None;
    }
    if polyline_length(keypoints.iter().map(|k| k.p_cam)) < params.min_length {
        return None;
    }
    Some(CenterlineLabel {
        keypoints,
        ..label.clone()
    })
}

/// Smooth image-plane curve through keypoint pixels, sampled every `step` pixels.
pub fn fit_spline_2d(pixels: &[[f64; 2]], step: f64) -> Result<Vec<[f64; 2]>, LabelError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(LabelError::InvalidSpacing(step));
    }
    let spline = CatmullRom::new(pixels).ok_or(LabelError::TooFewPoints(pixels.len()))?;
    Ok(spline.sample_uniform(step))
}

/// Splits `n_frames` consecutive frames into windows of `window` frames (the
/// remainder forms a final shorter window) and draws one index per window.
pub fn sample_windows(n_frames: usize, window: usize, seed: u64) -> Vec<usize> {
    let window = window.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_frames)
        .step_by(window)
        .map(|start| {
            let end = (start + window).min(n_frames);
            rng.random_range(start..end)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occlusion::classes;

    fn front_cam() -> CameraModel {
        // Optical axis along ego x, mounted 1.6 m up.
        let remap = nalgebra::Rotation3::from_matrix_unchecked(nalgebra::Matrix3::new(
            0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0,
        ));
        let extrinsic = Pose::from_parts(
            nalgebra::UnitQuaternion::from_rotation_matrix(&remap),
            Vec3::new(0.0, 0.0, 1.6),
        );
        CameraModel::new(1000.0, 1000.0, 512.0, 288.0, 1024, 576, extrinsic).unwrap()
    }

    fn lane(points: Vec<[f64; 3]>, is_intersection: bool) -> LaneSegment {
        LaneSegment {
            lane_id: 3,
            centerline: points,
            left_boundary: None,
            right_boundary: None,
            is_intersection,
        }
    }

    fn kp(u: f64, v: f64, depth: f64) -> Keypoint {
        Keypoint {
            u,
            v,
            p_cam: [0.0, 0.0, depth],
            depth,
            class_id: classes::ROAD,
            category: Category::Valid,
        }
    }

    #[test]
    fn straight_resample() {
        let out = resample_3d(&[[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]], 0.5).unwrap();
        assert_eq!(out.len(), 21);
        assert_eq!(out[0], [0.0, 0.0, 0.0]);
        assert_eq!(out[20], [10.0, 0.0, 0.0]);
        for w in out.windows(2) {
            assert!((w[1][0] - w[0][0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_errors() {
        assert_eq!(resample_3d(&[[0.0; 3]], 0.5), Err(LabelError::TooFewPoints(1)));
        assert_eq!(resample_3d(&[[0.0; 3], [0.0; 3]], 0.5), Err(LabelError::DegeneratePolyline));
        assert!(matches!(resample_3d(&[[0.0; 3], [1.0, 0.0, 0.0]], 0.0), Err(LabelError::InvalidSpacing(_))));
    }

    #[test]
    fn lane_behind_camera_is_empty() {
        let mask = SemanticMask::filled(1024, 576, classes::ROAD);
        let l = lane(vec![[-30.0, 0.0, 0.0], [-5.0, 0.0, 0.0]], false);
        let label =
            project_centerline(&l, &Pose::identity(), &front_cam(), &mask, &OcclusionOntology::default(), 0.5)
                .unwrap();
        assert!(label.keypoints.is_empty());
    }

    #[test]
    fn centered_lane_projects_to_principal_column() {
        let mask = SemanticMask::filled(1024, 576, classes::ROAD);
        let l = lane(vec![[2.0, 0.0, 0.0], [60.0, 0.0, 0.0]], false);
        let label =
            project_centerline(&l, &Pose::identity(), &front_cam(), &mask, &OcclusionOntology::default(), 0.5)
                .unwrap();
        assert!(!label.keypoints.is_empty());
        for k in &label.keypoints {
            assert!((k.u - 512.0).abs() < 1e-9);
            assert_eq!(k.category, Category::Valid);
        }
        let depths: Vec<f64> = label.keypoints.iter().map(|k| k.depth).collect();
        assert!(depths.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn mask_size_must_match() {
        let mask = SemanticMask::filled(10, 10, classes::ROAD);
        let l = lane(vec![[2.0, 0.0, 0.0], [60.0, 0.0, 0.0]], false);
        let r = project_centerline(&l, &Pose::identity(), &front_cam(), &mask, &OcclusionOntology::default(), 0.5);
        assert!(matches!(r, Err(LabelError::MaskSizeMismatch { .. })));
    }

    #[test]
    fn intersection_lane_is_rejected() {
        let label = CenterlineLabel {
            lane_id: 1,
            is_intersection: true,
            keypoints: (0..10).map(|i| kp(100.0, 10.0 * i as f64, 5.0 + i as f64)).collect(),
            r_occ: None,
        };
        assert!(geometric_filters(&label, &FilterParams::default()).is_none());
        let open = CenterlineLabel { is_intersection: false, ..label };
        assert!(geometric_filters(&open, &FilterParams::default()).is_some());
    }

    #[test]
    fn far_lane_is_rejected() {
        let label = CenterlineLabel {
            lane_id: 1,
            is_intersection: false,
            keypoints: (0..10).map(|i| kp(100.0, 10.0 * i as f64, 150.0 + i as f64)).collect(),
            r_occ: None,
        };
        assert!(geometric_filters(&label, &FilterParams::default()).is_none());
    }

    #[test]
    fn packed_keypoints_are_decimated() {
        // 1000 keypoints within 10 px.
        let label = CenterlineLabel {
            lane_id: 1,
            is_intersection: false,
            keypoints: (0..1000).map(|i| kp(500.0 + i as f64 / 100.0, 300.0, 5.0 + i as f64 / 100.0)).collect(),
            r_occ: None,
        };
        let params = FilterParams::default();
        let out = geometric_filters(&label, &params).unwrap();
        // Oracle: walk the pixel line in 5 px strides.
        let expected: Vec<f64> = (0..1000)
            .filter(|i| i % 500 == 0)
            .map(|i| 500.0 + i as f64 / 100.0)
            .collect();
        let got: Vec<f64> = out.keypoints.iter().map(|k| k.u).collect();
        assert_eq!(got.len(), expected.len());
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-9);
        }
        for w in out.keypoints.windows(2) {
            assert!(spline::distance(&w[0].pixel(), &w[1].pixel()) >= params.min_px_gap);
        }
    }

    #[test]
    fn short_lane_is_rejected() {
        let label = CenterlineLabel {
            lane_id: 1,
            is_intersection: false,
            keypoints: (0..5).map(|i| kp(100.0, 10.0 * i as f64, 5.0 + 0.5 * i as f64)).collect(),
            r_occ: None,
        };
        // 2 m of 3D length against a 3 m minimum.
        assert!(geometric_filters(&label, &FilterParams::default()).is_none());
    }

    #[test]
    fn spline_2d_collinear() {
        let pts = [[0.0, 0.0], [10.0, 5.0], [20.0, 10.0], [40.0, 20.0]];
        let out = fit_spline_2d(&pts, 2.0).unwrap();
        for p in &out {
            assert!((p[1] - 0.5 * p[0]).abs() < 1e-9, "{p:?}");
        }
        assert_eq!(out[0], pts[0]);
        assert_eq!(*out.last().unwrap(), pts[3]);
        assert_eq!(fit_spline_2d(&[[1.0, 1.0]], 2.0), Err(LabelError::TooFewPoints(1)));
    }

    #[test]
    fn window_sampling() {
        let picks = sample_windows(40, 20, 7);
        assert_eq!(picks.len(), 2);
        assert!(picks[0] < 20 && (20..40).contains(&picks[1]));
        assert_eq!(sample_windows(20, 20, 7).len(), 1);
        assert_eq!(sample_windows(41, 20, 7).len(), 3);
        assert_eq!(sample_windows(41, 20, 7)[2], 40);
        assert_eq!(sample_windows(40, 20, 7), picks);
        assert!(sample_windows(0, 20, 7).is_empty());
    }

    #[test]
    fn params_validation() {
        assert!(FilterParams::default().validate().is_ok());
        let p = FilterParams { min_keypoints: 1, ..Default::default() };
        assert!(p.validate().is_err());
        let p = FilterParams { spacing: -1.0, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
