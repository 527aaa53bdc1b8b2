//! `.clabel.json` label files.

use serde::{Deserialize, Serialize};

use super::bev::{BevGridSpec, BevTargets};
use super::{CenterlineLabel, Keypoint};
use crate::occlusion::Category;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointRecord {
    pub u: f64,
    pub v: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub depth: f64,
    pub class_id: u8,
    pub category: Category,
}

impl From<&Keypoint> for KeypointRecord {
    fn from(k: &Keypoint) -> Self {
        Self {
            u: k.u,
            v: k.v,
            x: k.p_cam[0],
            y: k.p_cam[1],
            z: k.p_cam[2],
            depth: k.depth,
            class_id: k.class_id,
            category: k.category,
        }
    }
}

impl From<&KeypointRecord> for Keypoint {
    fn from(r: &KeypointRecord) -> Self {
        Self {
            u: r.u,
            v: r.v,
            p_cam: [r.x, r.y, r.z],
            depth: r.depth,
            class_id: r.class_id,
            category: r.category,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterlineRecord {
    pub lane_id: i64,
    pub r_occ: Option<f64>,
    pub keypoints: Vec<KeypointRecord>,
    pub spline_2d: Vec<[f64; 2]>,
    /// Map lane boundaries moved into the camera frame, meters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_boundary: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_boundary: Option<Vec<[f64; 3]>>,
}

impl CenterlineRecord {
    pub fn from_label(label: &CenterlineLabel, spline_2d: Vec<[f64; 2]>) -> Self {
        Self {
            lane_id: label.lane_id,
            r_occ: label.r_occ,
            keypoints: label.keypoints.iter().map(KeypointRecord::from).collect(),
            spline_2d,
            left_boundary: None,
            right_boundary: None,
        }
    }

    pub fn keypoints(&self) -> Vec<Keypoint> {
        self.keypoints.iter().map(Keypoint::from).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevRecord {
    pub spec: BevGridSpec,
    pub seg: Vec<u8>,
    pub x_offset: Vec<Option<f64>>,
    pub height: Vec<Option<f64>>,
    pub instance: Vec<u32>,
}

impl From<&BevTargets> for BevRecord {
    fn from(t: &BevTargets) -> Self {
        Self {
            spec: t.spec,
            seg: t.seg.clone(),
            x_offset: t.x_offset.clone(),
            height: t.height.clone(),
            instance: t.instance.clone(),
        }
    }
}

impl BevRecord {
    pub fn to_targets(&self) -> Result<BevTargets, String> {
        self.spec.validate().map_err(|e| e.to_string())?;
        let n = self.spec.len();
        let lens = [self.seg.len(), self.x_offset.len(), self.height.len(), self.instance.len()];
        if lens.iter().any(|l| *l != n) {
            return Err(format!("BEV grids must have {n} cells, got {lens:?}"));
        }
        Ok(BevTargets {
            spec: self.spec,
            seg: self.seg.clone(),
            x_offset: self.x_offset.clone(),
            height: self.height.clone(),
            instance: self.instance.clone(),
        })
    }
}

/// One frame of one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClabelFile {
    pub frame_id: String,
    pub camera: String,
    /// Threshold applied, `null` when no centerline was removed for occlusion.
    pub t_occ_used: Option<f64>,
    pub image_size: [u32; 2],
    pub centerlines: Vec<CenterlineRecord>,
    pub bev: Option<BevRecord>,
}

impl ClabelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("label serialization");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    /// File stem shared by every per-frame artifact: `<camera>__<frame_id>`.
    pub fn key(&self) -> String {
        frame_key(&self.camera, &self.frame_id)
    }
}

pub fn frame_key(camera: &str, frame_id: &str) -> String {
    format!("{camera}__{frame_id}")
}
