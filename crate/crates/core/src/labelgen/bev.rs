//! Bird's-eye-view grid supervision targets.
//!
//! BEV frame: x lateral (right), y longitudinal (forward), z up. Grids are
//! stored row-major with `s2` rows along y and `s1` columns along x, so the
//! cell at `(row, col)` lives at index `row * s1 + col`.

use serde::{Deserialize, Serialize};

use super::LabelError;
use crate::geom::{Pose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BevGridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cell: f64,
}

impl Default for BevGridSpec {
    fn default() -> Self {
        Self {
            x_min: -16.0,
            x_max: 16.0,
            y_min: 0.0,
            y_max: 100.0,
            cell: 0.5,
        }
    }
}

fn whole_cells(extent: f64, cell: f64) -> Option<usize> {
    let n = extent / cell;
    let r = n.round();
    (r >= 1.0 && (n - r).abs() < 1e-9 * r.max(1.0)).then_some(r as usize)
}

impl BevGridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, cell: f64) -> Result<Self, LabelError> {
        let spec = Self {
            x_min,
            x_max,
            y_min,
            y_max,
            cell,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), LabelError> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max, self.cell]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.cell <= 0.0 {
            return Err(LabelError::InvalidGrid(format!("{self:?}")));
        }
        if whole_cells(self.x_max - self.x_min, self.cell).is_none()
            || whole_cells(self.y_max - self.y_min, self.cell).is_none()
        {
            return Err(LabelError::InvalidGrid(format!(
                "extents of {self:?} are not positive multiples of the cell size"
            )));
        }
        Ok(())
    }

    /// Number of columns (lateral).
    pub fn s1(&self) -> usize {
        whole_cells(self.x_max - self.x_min, self.cell).unwrap_or(0)
    }

    /// Number of rows (longitudinal).
    pub fn s2(&self) -> usize {
        whole_cells(self.y_max - self.y_min, self.cell).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.s1() * self.s2()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row_center(&self, row: usize) -> f64 {
        self.y_min + (row as f64 + 0.5) * self.cell
    }

    pub fn cell_left(&self, col: usize) -> f64 {
        self.x_min + col as f64 * self.cell
    }

    /// Column containing `x` and the fractional offset from its left edge.
    pub fn locate_x(&self, x: f64) -> Option<(usize, f64)> {
        let q = (x - self.x_min) / self.cell;
        let col = q.floor();
        if !(col >= 0.0 && (col as usize) < self.s1()) {
            return None;
        }
        Some((col as usize, q - col))
    }
}

/// Crossing of a polyline with the line `y = const`, as `(x, z)`.
///
/// Segments are treated as half-open `[a, b)` except the last, which also
/// includes its end vertex. When a polyline crosses several times the
/// crossing with the smallest `|x|` wins (earliest on ties).
pub fn row_crossing(polyline: &[[f64; 3]], y: f64) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    let last = polyline.len().saturating_sub(2);
    for (i, w) in polyline.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        if a[1] == b[1] {
            if a[1] == y {
                // Segment lies on the row: take its start point.
                consider(&mut best, a[0], a[2]);
            }
            continue;
        }
        let (lo, hi) = if a[1] < b[1] { (a, b) } else { (b, a) };
        let inside = if i == last {
            lo[1] <= y && y <= hi[1]
        } else {
            (a[1] <= y && y < b[1]) || (b[1] <= y && y < a[1])
        };
        if !inside {
            continue;
        }
        let t = (y - a[1]) / (b[1] - a[1]);
        consider(&mut best, a[0] + t * (b[0] - a[0]), a[2] + t * (b[2] - a[2]));
    }
    best
}

fn consider(best: &mut Option<(f64, f64)>, x: f64, z: f64) {
    if best.is_none_or(|(bx, _)| x.abs() < bx.abs()) {
        *best = Some((x, z));
    }
}

/// Dense supervision grids for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BevTargets {
    pub spec: BevGridSpec,
    pub seg: Vec<u8>,
    pub x_offset: Vec<Option<f64>>,
    pub height: Vec<Option<f64>>,
    /// Lane instance per cell; `0` is background, lane `i` of the input is `i + 1`.
    pub instance: Vec<u32>,
}

impl BevTargets {
    pub fn empty(spec: BevGridSpec) -> Self {
        let n = spec.len();
        Self {
            spec,
            seg: vec![0; n],
            x_offset: vec![None; n],
            height: vec![None; n],
            instance: vec![0; n],
        }
    }

    /// Per-instance polylines rebuilt from the targets: one point per marked row,
    /// ordered by `y`. Instances are returned in increasing ID order.
    pub fn polylines(&self) -> Vec<(u32, Vec<[f64; 3]>)> {
        let s1 = self.spec.s1();
        let mut by_instance: std::collections::BTreeMap<u32, Vec<[f64; 3]>> = Default::default();
        for (idx, &inst) in self.instance.iter().enumerate() {
            if inst == 0 || self.seg[idx] == 0 {
                continue;
            }
            let (row, col) = (idx / s1, idx % s1);
            let (Some(dx), Some(h)) = (self.x_offset[idx], self.height[idx]) else {
                continue;
            };
            by_instance.entry(inst).or_default().push([
                self.spec.cell_left(col) + dx * self.spec.cell,
                self.spec.row_center(row),
                h,
            ]);
        }
        by_instance.into_iter().collect()
    }
}

/// Rasterizes BEV-frame centerlines into grid targets.
pub fn encode_bev(centerlines: &[Vec<[f64; 3]>], grid: &BevGridSpec) -> BevTargets {
    let mut out = BevTargets::empty(*grid);
    let s1 = grid.s1();
    for (lane, polyline) in centerlines.iter().enumerate() {
        if polyline.len() < 2 {
            continue;
        }
        let (y_lo, y_hi) = polyline
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[1]), hi.max(p[1])));
        for row in 0..grid.s2() {
            let y = grid.row_center(row);
            if y < y_lo || y > y_hi {
                continue;
            }
            let Some((x, z)) = row_crossing(polyline, y) else {
                continue;
            };
            let Some((col, dx)) = grid.locate_x(x) else {
                continue;
            };
            let idx = row * s1 + col;
            if out.seg[idx] != 0 {
                // Cell already claimed by an earlier lane.
                continue;
            }
            out.seg[idx] = 1;
            out.x_offset[idx] = Some(dx);
            out.height[idx] = Some(z);
            out.instance[idx] = lane as u32 + 1;
        }
    }
    out
}

/// Ego frame (x forward, y left, z up) to BEV frame (x right, y forward, z up).
pub fn ego_to_bev(p: &Vec3) -> [f64; 3] {
    [-p.y, p.x, p.z]
}

pub fn camera_to_bev(p_cam: &Vec3, extrinsic: &Pose) -> [f64; 3] {
    ego_to_bev(&extrinsic.transform_point(p_cam))
}
