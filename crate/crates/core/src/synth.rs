//! Synthetic scenes with analytically known labels.
//!
//! Lanes are laid out in a local "start" frame that coincides with the ego
//! frame at the first trajectory sample: straight or concentric circular
//! lanes on flat ground, with the vehicle driving along +x at constant
//! speed. The map, trajectory and calibration are written in a randomly
//! placed and rotated city frame, so the pipeline exercises the full
//! city → ego → camera chain, while the expected keypoints are computed
//! directly in the start frame with closed-form arc sampling, explicit
//! trigonometric camera mounting and the pinhole formula.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{CameraModel, Pose, Trajectory, MIN_DEPTH};
use crate::ingest::{
    serialize_calibration, serialize_map, serialize_mask, serialize_trajectory, Calibration, LaneSegment,
    NamedCamera, SemanticMask, VectorMap,
};
use crate::labelgen::record::{frame_key, CenterlineRecord, ClabelFile, KeypointRecord};
use crate::labelgen::FilterParams;
use crate::occlusion::{classes, Category, OcclusionOntology};

const TRAJ_STEP_NS: i64 = 100_000_000;
/// Camera exposures fall between trajectory samples.
const CAMERA_OFFSET_NS: i64 = 37_000_000;
const BASE_TIME_NS: i64 = 1_600_000_000_000_000_000;
/// Lanes start this far behind the vehicle's first position.
const LANE_START_X: f64 = -10.0;
/// Vertex spacing of curved map lanes, meters.
const ARC_VERTEX_STEP: f64 = 0.25;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Paints a class over a fraction range of one lane's keypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub lane: usize,
    pub start: f64,
    pub end: f64,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub n_lanes: usize,
    pub lane_spacing: f64,
    /// Signed curvature (1/m) of the middle of the lane bundle; positive turns left.
    pub curvature: f64,
    pub lane_length: f64,
    pub occluders: Vec<Occluder>,
    pub camera_preset: String,
    pub seed: u64,
    pub n_frames: usize,
    /// Ego speed along the lanes, m/s.
    pub speed: f64,
    pub intersection_lanes: Vec<usize>,
    pub filter: FilterParams,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_lanes: 3,
            lane_spacing: 3.5,
            curvature: 0.0,
            lane_length: 120.0,
            occluders: Vec::new(),
            camera_preset: "front_center".into(),
            seed: 0,
            n_frames: 1,
            speed: 10.0,
            intersection_lanes: Vec::new(),
            filter: FilterParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Mount {
    yaw: f64,
    t: [f64; 3],
}

struct Preset {
    cameras: Vec<(&'static str, Mount)>,
}

const FX: f64 = 900.0;
const WIDTH: u32 = 1024;
const HEIGHT: u32 = 576;

fn preset(name: &str) -> Option<Preset> {
    let center = ("ring_front_center", Mount { yaw: 0.0, t: [1.5, 0.0, 1.6] });
    let left = ("ring_front_left", Mount { yaw: PI / 4.0, t: [1.3, 0.4, 1.6] });
    let right = ("ring_front_right", Mount { yaw: -PI / 4.0, t: [1.3, -0.4, 1.6] });
    match name {
        "front_center" => Some(Preset { cameras: vec![center] }),
        "front_triplet" => Some(Preset { cameras: vec![center, left, right] }),
        _ => None,
    }
}

pub const CAMERA_PRESETS: [&str; 2] = ["front_center", "front_triplet"];

fn camera_model(m: &Mount) -> CameraModel {
    // Columns: camera x (right), y (down), z (forward) expressed in the ego frame.
    let axes = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), m.yaw) * Rotation3::from_matrix_unchecked(axes);
    let extrinsic = Pose::from_parts(UnitQuaternion::from_rotation_matrix(&rot), Vector3::from(m.t));
    CameraModel::new(FX, FX, f64::from(WIDTH) / 2.0, f64::from(HEIGHT) / 2.0, WIDTH, HEIGHT, extrinsic)
        .expect("preset camera is valid")
}

/// Closed-form lane geometry in the start frame.
#[derive(Debug, Clone, Copy)]
struct LocalLane {
    offset: f64,
    curvature: f64,
    length: f64,
}

impl LocalLane {
    fn radius(&self) -> f64 {
        1.0 / self.curvature - self.offset
    }

    fn at(&self, s: f64) -> [f64; 3] {
        if self.curvature == 0.0 {
            return [LANE_START_X + s, self.offset, 0.0];
        }
        let r = self.radius();
        [LANE_START_X + r * (s / r).sin(), 1.0 / self.curvature - r * (s / r).cos(), 0.0]
    }

    fn arc_positions(&self, step: f64) -> Vec<f64> {
        let n = (self.length / step + 1e-9).floor() as usize;
        let mut s: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
        if self.length - n as f64 * step > 1e-9 * self.length.max(1.0) {
            s.push(self.length);
        } else {
            s[n] = self.length;
        }
        s
    }
}

/// Expected label of one lane in one frame, before any threshold is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedLane {
    pub lane_id: i64,
    pub keypoints: Vec<KeypointRecord>,
    pub n_occluded: usize,
    pub r_occ: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub camera: String,
    pub t_ns: i64,
    pub mask: SemanticMask,
    pub expected: Vec<ExpectedLane>,
}

impl SynthFrame {
    pub fn frame_id(&self) -> String {
        self.t_ns.to_string()
    }

    pub fn key(&self) -> String {
        frame_key(&self.camera, &self.frame_id())
    }

    pub fn expected_clabel(&self) -> ClabelFile {
        ClabelFile {
            frame_id: self.frame_id(),
            camera: self.camera.clone(),
            t_occ_used: None,
            image_size: [self.mask.width(), self.mask.height()],
            centerlines: self
                .expected
                .iter()
                .map(|l| CenterlineRecord {
                    lane_id: l.lane_id,
                    r_occ: Some(l.r_occ),
                    keypoints: l.keypoints.clone(),
                    spline_2d: Vec::new(),
                    left_boundary: None,
                    right_boundary: None,
                })
                .collect(),
            bev: None,
        }
    }
}

/// A generated scene; frames are rendered on demand.
pub struct Scene {
    spec: SceneSpec,
    lanes: Vec<LocalLane>,
    mounts: Vec<(String, Mount)>,
    pub map: VectorMap,
    pub trajectory: Trajectory,
    pub calibration: Calibration,
    frames: Vec<(usize, i64)>,
    ontology: OcclusionOntology,
}

fn lane_id(j: usize) -> i64 {
    1000 + j as i64
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_lanes == 0 {
            return bad("n_lanes must be at least 1".into());
        }
        if !(self.lane_spacing.is_finite() && self.lane_spacing > 0.0) {
            return bad("lane_spacing must be positive".into());
        }
        if !(self.lane_length.is_finite() && self.lane_length > 0.0) {
            return bad("lane_length must be positive".into());
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return bad("speed must be non-negative".into());
        }
        if self.n_frames == 0 {
            return bad("n_frames must be at least 1".into());
        }
        if !self.curvature.is_finite() {
            return bad("curvature must be finite".into());
        }
        let half_width = 0.5 * (self.n_lanes as f64 - 1.0) * self.lane_spacing;
        if self.curvature != 0.0 {
            let r = 1.0 / self.curvature.abs();
            if r <= half_width + 1.0 {
                return bad(format!("curvature radius {r} m too tight for a {half_width} m half-width"));
            }
            if self.lane_length >= PI * (r - half_width) {
                return bad("curved lanes may not exceed a half turn".into());
            }
        }
        if preset(&self.camera_preset).is_none() {
            return bad(format!("unknown camera preset {:?}; known: {CAMERA_PRESETS:?}", self.camera_preset));
        }
        for o in &self.occluders {
            if o.lane >= self.n_lanes {
                return bad(format!("occluder lane {} out of range", o.lane));
            }
            if !(0.0..=1.0).contains(&o.start) || !(0.0..=1.0).contains(&o.end) || o.start >= o.end {
                return bad(format!("occluder fractions [{}, {}) invalid", o.start, o.end));
            }
        }
        if let Some(l) = self.intersection_lanes.iter().find(|l| **l >= self.n_lanes) {
            return bad(format!("intersection lane {l} out of range"));
        }
        self.filter
            .validate()
            .map_err(|e| SynthError::InvalidSpec(e.to_string()))
    }
}

impl Scene {
    pub fn new(spec: SceneSpec) -> Result<Self, SynthError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let yaw0: f64 = rng.random_range(-PI..PI);
        let origin = [
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
            rng.random_range(0.0..20.0),
        ];
        let start_to_city = Pose::from_parts(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw0),
            Vector3::from(origin),
        );

        let lanes: Vec<LocalLane> = (0..spec.n_lanes)
            .map(|j| LocalLane {
                offset: (j as f64 - 0.5 * (spec.n_lanes as f64 - 1.0)) * spec.lane_spacing,
                curvature: if spec.curvature == 0.0 {
                    0.0
                } else {
                    // Concentric arcs around the bundle's center of curvature.
                    spec.curvature
                },
                length: spec.lane_length,
            })
            .collect();

        let mut map_lanes = Vec::with_capacity(lanes.len());
        for (j, lane) in lanes.iter().enumerate() {
            let local: Vec<[f64; 3]> = if lane.curvature == 0.0 {
                vec![lane.at(0.0), lane.at(lane.length)]
            } else {
                lane.arc_positions(ARC_VERTEX_STEP).into_iter().map(|s| lane.at(s)).collect()
            };
            let centerline = local
                .iter()
                .map(|p| {
                    let c = start_to_city.transform_point(&Vector3::from(*p));
                    [c.x, c.y, c.z]
                })
                .collect();
            map_lanes.push(LaneSegment {
                lane_id: lane_id(j),
                centerline,
                left_boundary: None,
                right_boundary: None,
                is_intersection: spec.intersection_lanes.contains(&j),
            });
        }
        let map = VectorMap::new(format!("SYNTH{}", spec.seed), map_lanes)
            .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;

        let poses = (0..=spec.n_frames)
            .map(|k| {
                let t_s = k as f64 * TRAJ_STEP_NS as f64 * 1e-9;
                let local = Pose::from_parts(UnitQuaternion::identity(), Vector3::new(spec.speed * t_s, 0.0, 0.0));
                start_to_city.compose(&local).with_timestamp(BASE_TIME_NS + k as i64 * TRAJ_STEP_NS)
            })
            .collect();
        let trajectory = Trajectory::new(poses).expect("timestamps increase");

        let mounts: Vec<(String, Mount)> = preset(&spec.camera_preset)
            .expect("validated")
            .cameras
            .into_iter()
            .map(|(n, m)| (n.to_string(), m))
            .collect();
        let calibration = Calibration {
            cameras: mounts
                .iter()
                .map(|(name, m)| NamedCamera {
                    name: name.clone(),
                    model: camera_model(m),
                })
                .collect(),
        };
        let frames = (0..spec.n_frames)
            .flat_map(|k| {
                let t = BASE_TIME_NS + k as i64 * TRAJ_STEP_NS + CAMERA_OFFSET_NS;
                (0..mounts.len()).map(move |c| (c, t))
            })
            .collect();
        Ok(Self {
            spec,
            lanes,
            mounts,
            map,
            trajectory,
            calibration,
            frames,
            ontology: OcclusionOntology::default(),
        })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Keypoints of lane `j` as seen by camera `cam` at time `t_ns`, after the
    /// geometric filters, as `(u, v, p_cam)`.
    fn expected_geometry(&self, j: usize, cam: usize, t_ns: i64) -> Vec<(f64, f64, [f64; 3])> {
        if self.spec.intersection_lanes.contains(&j) {
            return Vec::new();
        }
        let f = &self.spec.filter;
        let lane = &self.lanes[j];
        let mount = &self.mounts[cam].1;
        let ego_x = self.spec.speed * ((t_ns - BASE_TIME_NS) as f64 * 1e-9);
        let (sin_y, cos_y) = mount.yaw.sin_cos();
        let (cx, cy) = (f64::from(WIDTH) / 2.0, f64::from(HEIGHT) / 2.0);

        let mut visible = Vec::new();
        for s in lane.arc_positions(f.spacing) {
            let p = lane.at(s);
            let (dx, dy, dz) = (p[0] - ego_x - mount.t[0], p[1] - mount.t[1], p[2] - mount.t[2]);
            let forward = cos_y * dx + sin_y * dy;
            let left = -sin_y * dx + cos_y * dy;
            let p_cam = [-left, -dz, forward];
            if p_cam[2] <= MIN_DEPTH {
                continue;
            }
            let u = FX * p_cam[0] / p_cam[2] + cx;
            let v = FX * p_cam[1] / p_cam[2] + cy;
            let in_image = |a: f64, n: u32| a >= 0.0 && a < f64::from(n);
            let (ru, rv) = (u.round(), v.round());
            if !(in_image(u, WIDTH) && in_image(v, HEIGHT) && in_image(ru, WIDTH) && in_image(rv, HEIGHT)) {
                continue;
            }
            if p_cam[2] > f.max_depth {
                continue;
            }
            visible.push((u, v, p_cam));
        }
        let mut kept: Vec<(f64, f64, [f64; 3])> = Vec::new();
        for k in visible {
            let ok = kept
                .last()
                .is_none_or(|l| ((k.0 - l.0).powi(2) + (k.1 - l.1).powi(2)).sqrt() >= f.min_px_gap);
            if ok {
                kept.push(k);
            }
        }
        let length: f64 = kept
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0].2, w[1].2);
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
            })
            .sum();
        if kept.len() < f.min_keypoints || length < f.min_length {
            return Vec::new();
        }
        kept
    }

    pub fn frame(&self, index: usize) -> SynthFrame {
        let (cam, t_ns) = self.frames[index];
        let horizon = (f64::from(HEIGHT) / 2.0) as u32;
        let mut labels = vec![classes::ROAD; (WIDTH * HEIGHT) as usize];
        labels[..(horizon * WIDTH) as usize].fill(classes::SKY);
        let mut mask = SemanticMask::new(WIDTH, HEIGHT, labels).expect("sized");

        let geometry: Vec<_> = (0..self.lanes.len())
            .map(|j| self.expected_geometry(j, cam, t_ns))
            .collect();
        for occ in &self.spec.occluders {
            let pts = &geometry[occ.lane];
            let n = pts.len() as f64;
            let class = match occ.category {
                Category::Valid => classes::ROAD,
                Category::OcclusionValid => classes::CAR,
                Category::Invalid => classes::BUILDING,
            };
            for (k, (u, v, _)) in pts.iter().enumerate() {
                let frac = k as f64 / n;
                if frac < occ.start || frac >= occ.end {
                    continue;
                }
                let (x, y) = (u.round() as i64, v.round() as i64);
                for oy in -1..=1 {
                    for ox in -1..=1 {
                        mask.set(x + ox, y + oy, class);
                    }
                }
            }
        }

        let expected = geometry
            .iter()
            .enumerate()
            .filter(|(_, pts)| !pts.is_empty())
            .map(|(j, pts)| {
                let keypoints: Vec<KeypointRecord> = pts
                    .iter()
                    .map(|(u, v, p)| {
                        let class_id = mask.get(u.round() as i64, v.round() as i64).expect("in image");
                        KeypointRecord {
                            u: *u,
                            v: *v,
                            x: p[0],
                            y: p[1],
                            z: p[2],
                            depth: p[2],
                            class_id,
                            category: self.ontology.categorize(class_id),
                        }
                    })
                    .collect();
                let n_occluded = keypoints.iter().filter(|k| k.category != Category::Valid).count();
                ExpectedLane {
                    lane_id: lane_id(j),
                    r_occ: n_occluded as f64 / keypoints.len() as f64,
                    n_occluded,
                    keypoints,
                }
            })
            .collect();
        SynthFrame {
            camera: self.mounts[cam].0.clone(),
            t_ns,
            mask,
            expected,
        }
    }
}

/// All artifacts of a scene held in memory.
pub struct SceneBundle {
    pub map: VectorMap,
    pub trajectory: Trajectory,
    pub calibration: Calibration,
    pub frames: Vec<SynthFrame>,
}

pub fn generate(spec: &SceneSpec) -> Result<SceneBundle, SynthError> {
    let scene = Scene::new(spec.clone())?;
    let frames = (0..scene.frame_count()).map(|i| scene.frame(i)).collect();
    Ok(SceneBundle {
        map: scene.map,
        trajectory: scene.trajectory,
        calibration: scene.calibration,
        frames,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), SynthError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| SynthError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes a scene bundle to `dir`, one frame at a time:
///
/// ```text
/// map.cmap.json  trajectory.traj.json  calibration.calib.json  scene.json
/// masks/<camera>/<t_ns>.smask
/// expected/<camera>__<t_ns>.expected.clabel.json
/// ```
pub fn write_bundle(spec: &SceneSpec, dir: &Path) -> Result<usize, SynthError> {
    let scene = Scene::new(spec.clone())?;
    write(&dir.join("map.cmap.json"), &serialize_map(&scene.map))?;
    write(&dir.join("trajectory.traj.json"), &serialize_trajectory(&scene.trajectory))?;
    write(&dir.join("calibration.calib.json"), &serialize_calibration(&scene.calibration))?;
    let mut spec_json = serde_json::to_vec_pretty(spec).expect("spec serialization");
    spec_json.push(b'\n');
    write(&dir.join("scene.json"), &spec_json)?;
    for i in 0..scene.frame_count() {
        let frame = scene.frame(i);
        write(
            &dir.join("masks").join(&frame.camera).join(format!("{}.smask", frame.t_ns)),
            &serialize_mask(&frame.mask),
        )?;
        write(
            &dir.join("expected").join(format!("{}.expected.clabel.json", frame.key())),
            &frame.expected_clabel().to_bytes(),
        )?;
    }
    Ok(scene.frame_count())
}
