//! Interchange file formats: vector maps, trajectories, calibrations and
//! semantic masks.
//!
//! The three JSON formats are parsed into plain record structs first and then
//! validated into domain types, so every failure carries a locus (a
//! `line/column` for syntax errors, a field path for constraint violations).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{CameraModel, GeomError, Pose, Trajectory};

pub const MASK_MAGIC: &[u8; 4] = b"SMK1";
pub const MASK_HEADER_LEN: usize = 16;
/// Class ID reserved for pixels without a label.
pub const UNLABELED: u8 = 255;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("schema error at {locus}: {message}")]
    Schema { locus: String, message: String },
    #[error("duplicate lane_id {0}")]
    DuplicateLaneId(i64),
    #[error("trajectory is empty")]
    EmptyTrajectory,
}

impl IngestError {
    fn schema(locus: impl Into<String>, message: impl Into<String>) -> Self {
        IngestError::Schema {
            locus: locus.into(),
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for IngestError {
    fn from(e: serde_json::Error) -> Self {
        IngestError::schema(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    }
}

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct LaneSegment {
    pub lane_id: i64,
    pub centerline: Vec<Point3>,
    pub left_boundary: Option<Vec<Point3>>,
    pub right_boundary: Option<Vec<Point3>>,
    pub is_intersection: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorMap {
    pub city: String,
    pub lanes: BTreeMap<i64, LaneSegment>,
}

impl VectorMap {
    pub fn new(city: impl Into<String>, lanes: Vec<LaneSegment>) -> Result<Self, IngestError> {
        let mut map = VectorMap {
            city: city.into(),
            lanes: BTreeMap::new(),
        };
        for lane in lanes {
            let id = lane.lane_id;
            if map.lanes.insert(id, lane).is_some() {
                return Err(IngestError::DuplicateLaneId(id));
            }
        }
        Ok(map)
    }
}

/// Row-major grid of per-pixel semantic class IDs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticMask {
    width: u32,
    height: u32,
    labels: Vec<u8>,
}

impl SemanticMask {
    pub fn new(width: u32, height: u32, labels: Vec<u8>) -> Result<Self, IngestError> {
        let expected = (width as u64) * (height as u64);
        if labels.len() as u64 != expected {
            return Err(IngestError::schema(
                "payload",
                format!(
                    "{width}x{height} mask needs {expected} class IDs, got {}",
                    labels.len()
                ),
            ));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: u32, height: u32, class_id: u8) -> Self {
        Self {
            width,
            height,
            labels: vec![class_id; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: i64, y: i64) -> Option<u8> {
        if x < 0 || y < 0 || x >= i64::from(self.width) || y >= i64::from(self.height) {
            return None;
        }
        Some(self.labels[y as usize * self.width as usize + x as usize])
    }

    pub fn set(&mut self, x: i64, y: i64, class_id: u8) -> bool {
        if x < 0 || y < 0 || x >= i64::from(self.width) || y >= i64::from(self.height) {
            return false;
        }
        self.labels[y as usize * self.width as usize + x as usize] = class_id;
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedCamera {
    pub name: String,
    pub model: CameraModel,
}

/// Cameras in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Calibration {
    pub cameras: Vec<NamedCamera>,
}

impl Calibration {
    pub fn get(&self, name: &str) -> Option<&CameraModel> {
        self.cameras
            .iter()
            .find(|c| c.name == name)
            .map(|c| &c.model)
    }
}

// --- file records ---------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MapFile {
    city: String,
    lanes: Vec<LaneRecord>,
}

#[derive(Serialize, Deserialize)]
struct LaneRecord {
    lane_id: i64,
    is_intersection: bool,
    centerline: Vec<Point3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left_boundary: Option<Vec<Point3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right_boundary: Option<Vec<Point3>>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryFile {
    frames: Vec<FrameRecord>,
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    t_ns: i64,
    q: [f64; 4],
    t: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct CalibrationFile {
    cameras: Vec<CameraRecord>,
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    name: String,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    extrinsic: ExtrinsicRecord,
}

#[derive(Serialize, Deserialize)]
struct ExtrinsicRecord {
    q: [f64; 4],
    t: [f64; 3],
}

fn to_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    // Records hold only strings, numbers and arrays, which always serialize.
    let mut out = serde_json::to_vec_pretty(value).expect("record serialization");
    out.push(b'\n');
    out
}

fn check_polyline(locus: &str, points: &[Point3], require_distinct: bool) -> Result<(), IngestError> {
    if points.len() < 2 {
        return Err(IngestError::schema(locus, "polyline needs at least 2 vertices"));
    }
    for (i, p) in points.iter().enumerate() {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(IngestError::schema(format!("{locus}[{i}]"), "non-finite coordinate"));
        }
        if require_distinct && i > 0 && points[i - 1] == *p {
            return Err(IngestError::schema(
                format!("{locus}[{i}]"),
                "consecutive vertices are identical",
            ));
        }
    }
    Ok(())
}

// --- map ------------------------------------------------------------------

pub fn parse_map(bytes: &[u8]) -> Result<VectorMap, IngestError> {
    let file: MapFile = serde_json::from_slice(bytes)?;
    let mut lanes = Vec::with_capacity(file.lanes.len());
    for (i, rec) in file.lanes.into_iter().enumerate() {
        check_polyline(&format!("lanes[{i}].centerline"), &rec.centerline, true)?;
        for (name, boundary) in [
            ("left_boundary", &rec.left_boundary),
            ("right_boundary", &rec.right_boundary),
        ] {
            if let Some(b) = boundary {
                check_polyline(&format!("lanes[{i}].{name}"), b, false)?;
            }
        }
        lanes.push(LaneSegment {
            lane_id: rec.lane_id,
            centerline: rec.centerline,
            left_boundary: rec.left_boundary,
            right_boundary: rec.right_boundary,
            is_intersection: rec.is_intersection,
        });
    }
    VectorMap::new(file.city, lanes)
}

pub fn serialize_map(map: &VectorMap) -> Vec<u8> {
    let file = MapFile {
        city: map.city.clone(),
        lanes: map
            .lanes
            .values()
            .map(|l| LaneRecord {
                lane_id: l.lane_id,
                is_intersection: l.is_intersection,
                centerline: l.centerline.clone(),
                left_boundary: l.left_boundary.clone(),
                right_boundary: l.right_boundary.clone(),
            })
            .collect(),
    };
    to_pretty(&file)
}

// --- trajectory -----------------------------------------------------------

pub fn parse_trajectory(bytes: &[u8]) -> Result<Trajectory, IngestError> {
    let file: TrajectoryFile = serde_json::from_slice(bytes)?;
    if file.frames.is_empty() {
        return Err(IngestError::EmptyTrajectory);
    }
    let mut poses = Vec::with_capacity(file.frames.len());
    for (i, f) in file.frames.iter().enumerate() {
        let pose = Pose::new(f.q, f.t)
            .map_err(|e| IngestError::schema(format!("frames[{i}]"), e.to_string()))?;
        poses.push(pose.with_timestamp(f.t_ns));
    }
    Trajectory::new(poses).map_err(|e| match e {
        GeomError::NonIncreasing { index } => {
            IngestError::schema(format!("frames[{index}].t_ns"), e.to_string())
        }
        GeomError::EmptyTrajectory => IngestError::EmptyTrajectory,
        other => IngestError::schema("frames", other.to_string()),
    })
}

pub fn serialize_trajectory(traj: &Trajectory) -> Vec<u8> {
    let file = TrajectoryFile {
        frames: traj
            .poses()
            .iter()
            .map(|p| FrameRecord {
                t_ns: p.timestamp_ns().unwrap_or_default(),
                q: p.quaternion_wxyz(),
                t: p.translation_array(),
            })
            .collect(),
    };
    to_pretty(&file)
}

// --- calibration ----------------------------------------------------------

pub fn parse_calibration(bytes: &[u8]) -> Result<Calibration, IngestError> {
    let file: CalibrationFile = serde_json::from_slice(bytes)?;
    let mut cameras: Vec<NamedCamera> = Vec::with_capacity(file.cameras.len());
    for (i, c) in file.cameras.into_iter().enumerate() {
        let locus = format!("cameras[{i}]");
        if cameras.iter().any(|n| n.name == c.name) {
            return Err(IngestError::schema(
                format!("{locus}.name"),
                format!("duplicate camera name {:?}", c.name),
            ));
        }
        let extrinsic = Pose::new(c.extrinsic.q, c.extrinsic.t)
            .map_err(|e| IngestError::schema(format!("{locus}.extrinsic"), e.to_string()))?;
        let model = CameraModel::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height, extrinsic)
            .map_err(|e| IngestError::schema(locus.clone(), e.to_string()))?;
        cameras.push(NamedCamera {
            name: c.name,
            model,
        });
    }
    Ok(Calibration { cameras })
}

pub fn serialize_calibration(calib: &Calibration) -> Vec<u8> {
    let file = CalibrationFile {
        cameras: calib
            .cameras
            .iter()
            .map(|c| CameraRecord {
                name: c.name.clone(),
                fx: c.model.fx,
                fy: c.model.fy,
                cx: c.model.cx,
                cy: c.model.cy,
                width: c.model.width,
                height: c.model.height,
                extrinsic: ExtrinsicRecord {
                    q: c.model.extrinsic.quaternion_wxyz(),
                    t: c.model.extrinsic.translation_array(),
                },
            })
            .collect(),
    };
    to_pretty(&file)
}

// --- mask -----------------------------------------------------------------

pub fn parse_mask(bytes: &[u8]) -> Result<SemanticMask, IngestError> {
    if bytes.len() < MASK_HEADER_LEN {
        return Err(IngestError::schema(
            "header",
            format!("need {MASK_HEADER_LEN} header bytes, got {}", bytes.len()),
        ));
    }
    if &bytes[0..4] != MASK_MAGIC {
        return Err(IngestError::schema("header.magic", "expected \"SMK1\""));
    }
    let word = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
    let (width, height, reserved) = (word(4), word(8), word(12));
    if reserved != 0 {
        return Err(IngestError::schema("header.reserved", "reserved word must be zero"));
    }
    SemanticMask::new(width, height, bytes[MASK_HEADER_LEN..].to_vec())
}

pub fn serialize_mask(mask: &SemanticMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(MASK_HEADER_LEN + mask.labels.len());
    out.extend_from_slice(MASK_MAGIC);
    out.extend_from_slice(&mask.width.to_le_bytes());
    out.extend_from_slice(&mask.height.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&mask.labels);
    out
}
