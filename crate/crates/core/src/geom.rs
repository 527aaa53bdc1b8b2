//! Rigid transforms, pose interpolation and pinhole projection.
//!
//! Frame conventions used throughout the crate:
//!
//! * city frame: the map's global metric frame.
//! * ego frame: x forward, y left, z up, origin on the ground below the
//!   vehicle reference point. Ego poses map ego coordinates into the city frame.
//! * camera frame: x right, y down, z along the optical axis. Camera
//!   extrinsics map camera coordinates into the ego frame.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

/// Points at or closer than this depth (meters) are never projected.
pub const MIN_DEPTH: f64 = 0.1;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("quaternion must be finite and non-zero, got {0:?}")]
    DegenerateQuaternion([f64; 4]),
    #[error("translation must be finite, got {0:?}")]
    NonFiniteTranslation([f64; 3]),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("trajectory pose {index} has no timestamp")]
    MissingTimestamp { index: usize },
    #[error("trajectory timestamps must strictly increase (index {index})")]
    NonIncreasing { index: usize },
    #[error("timestamp {t} outside trajectory span [{first}, {last}]")]
    OutOfRange { t: i64, first: i64, last: i64 },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
}

/// A rigid transform with an optional timestamp in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vec3,
    timestamp_ns: Option<i64>,
}

impl Pose {
    /// Builds a pose from a `[w, x, y, z]` quaternion and a translation.
    ///
    /// The quaternion is normalized unless it already has unit norm to within
    /// a few ulps, in which case it is stored bit-for-bit.
    pub fn new(q_wxyz: [f64; 4], translation: [f64; 3]) -> Result<Self, GeomError> {
        if !q_wxyz.iter().all(|c| c.is_finite()) {
            return Err(GeomError::DegenerateQuaternion(q_wxyz));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(GeomError::NonFiniteTranslation(translation));
        }
        let q = Quaternion::new(q_wxyz[0], q_wxyz[1], q_wxyz[2], q_wxyz[3]);
        let norm_sq = q.norm_squared();
        if norm_sq < 1e-24 {
            return Err(GeomError::DegenerateQuaternion(q_wxyz));
        }
        let rotation = if (norm_sq - 1.0).abs() <= 8.0 * f64::EPSILON {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        Ok(Self {
            rotation,
            translation: Vector3::from(translation),
            timestamp_ns: None,
        })
    }

    pub fn from_parts(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
            timestamp_ns: None,
        }
    }

    pub fn identity() -> Self {
        Self::from_parts(UnitQuaternion::identity(), Vec3::zeros())
    }

    pub fn with_timestamp(mut self, t_ns: i64) -> Self {
        self.timestamp_ns = Some(t_ns);
        self
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn timestamp_ns(&self) -> Option<i64> {
        self.timestamp_ns
    }

    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn translation_array(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    /// Applies the transform to a point.
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: first apply `other`, then `self`. The result carries no timestamp.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::from_parts(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -(inv * self.translation),
            timestamp_ns: self.timestamp_ns,
        }
    }

    /// Rotation angle (radians) and translation distance separating two poses.
    pub fn distance_to(&self, other: &Pose) -> (f64, f64) {
        (
            self.rotation.angle_to(&other.rotation),
            (self.translation - other.translation).norm(),
        )
    }
}

/// Shortest-arc spherical interpolation between two unit quaternions.
pub fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, s: f64) -> UnitQuaternion<f64> {
    let qa = a.quaternion().coords;
    let mut qb = b.quaternion().coords;
    let mut dot = qa.dot(&qb);
    if dot < 0.0 {
        qb = -qb;
        dot = -dot;
    }
    let coords = if dot > 1.0 - 1e-12 {
        // Nearly parallel: linear blend is exact to rounding.
        qa * (1.0 - s) + qb * s
    } else {
        let omega = dot.min(1.0).acos();
        let sin_omega = omega.sin();
        qa * (((1.0 - s) * omega).sin() / sin_omega) + qb * ((s * omega).sin() / sin_omega)
    };
    UnitQuaternion::from_quaternion(Quaternion::from(coords))
}

/// Timestamped poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self, GeomError> {
        if poses.is_empty() {
            return Err(GeomError::EmptyTrajectory);
        }
        let mut prev: Option<i64> = None;
        for (index, pose) in poses.iter().enumerate() {
            let t = pose
                .timestamp_ns
                .ok_or(GeomError::MissingTimestamp { index })?;
            if prev.is_some_and(|p| t <= p) {
                return Err(GeomError::NonIncreasing { index });
            }
            prev = Some(t);
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    fn stamp(&self, i: usize) -> i64 {
        // Validated at construction.
        self.poses[i].timestamp_ns.unwrap_or_default()
    }

    pub fn first_ns(&self) -> i64 {
        self.stamp(0)
    }

    pub fn last_ns(&self) -> i64 {
        self.stamp(self.poses.len() - 1)
    }

    /// Pose at time `t_ns`: linear in translation, slerp in rotation.
    pub fn interpolate(&self, t_ns: i64) -> Result<Pose, GeomError> {
        let (first, last) = (self.first_ns(), self.last_ns());
        if t_ns < first || t_ns > last {
            return Err(GeomError::OutOfRange {
                t: t_ns,
                first,
                last,
            });
        }
        let hi = match self
            .poses
            .binary_search_by_key(&t_ns, |p| p.timestamp_ns.unwrap_or_default())
        {
            Ok(i) => return Ok(self.poses[i]),
            Err(i) => i,
        };
        let (a, b) = (&self.poses[hi - 1], &self.poses[hi]);
        let (ta, tb) = (self.stamp(hi - 1), self.stamp(hi));
        let s = ((t_ns - ta) as f64) / ((tb - ta) as f64);
        let translation = a.translation * (1.0 - s) + b.translation * s;
        let rotation = slerp(&a.rotation, &b.rotation, s);
        Ok(Pose::from_parts(rotation, translation).with_timestamp(t_ns))
    }
}

/// Rectified pinhole camera with its mounting pose in the ego frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub extrinsic: Pose,
}

/// A visible projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        extrinsic: Pose,
    ) -> Result<Self, GeomError> {
        let bad = |msg: String| Err(GeomError::InvalidCamera(msg));
        if !(fx.is_finite() && fx > 0.0) || !(fy.is_finite() && fy > 0.0) {
            return bad(format!("focal lengths must be positive, got fx={fx}, fy={fy}"));
        }
        if width == 0 || height == 0 {
            return bad(format!("image size must be positive, got {width}x{height}"));
        }
        if !(cx >= 0.0 && cx < f64::from(width)) || !(cy >= 0.0 && cy < f64::from(height)) {
            return bad(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsic,
        })
    }

    /// Projects a camera-frame point; `None` when behind `MIN_DEPTH` or off-image.
    pub fn project(&self, p_cam: &Vec3) -> Option<Projection> {
        if !(p_cam.z > MIN_DEPTH) {
            return None;
        }
        let u = self.fx * p_cam.x / p_cam.z + self.cx;
        let v = self.fy * p_cam.y / p_cam.z + self.cy;
        let inside = u >= 0.0 && u < f64::from(self.width) && v >= 0.0 && v < f64::from(self.height);
        inside.then_some(Projection {
            u,
            v,
            depth: p_cam.z,
        })
    }

    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        Vec3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        )
    }

    /// Transform taking city coordinates to this camera's frame for a given ego pose.
    pub fn city_to_camera_transform(&self, ego_pose: &Pose) -> Pose {
        ego_pose.compose(&self.extrinsic).inverse()
    }
}

pub fn city_to_camera(p_city: &Vec3, ego_pose: &Pose, cam: &CameraModel) -> Vec3 {
    cam.extrinsic
        .inverse()
        .transform_point(&ego_pose.inverse().transform_point(p_city))
}

pub fn camera_to_city(p_cam: &Vec3, ego_pose: &Pose, cam: &CameraModel) -> Vec3 {
    ego_pose.transform_point(&cam.extrinsic.transform_point(p_cam))
}
