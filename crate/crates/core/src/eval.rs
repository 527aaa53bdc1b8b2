//! Centerline matching and benchmark metrics.
//!
//! Predicted and ground-truth polylines (BEV frame) are sampled at rows
//! `y = (k + ½) · row_step`. A pair is compatible when the mean lateral gap
//! over their shared rows is within `match_threshold`; the assignment is the
//! largest one-to-one matching over compatible pairs, and among those the one
//! with the smallest total gap. Errors are averaged over matched points.

use serde::{Deserialize, Serialize};

use crate::labelgen::bev::row_crossing;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchSpec {
    pub match_threshold: f64,
    pub near_band: [f64; 2],
    pub far_band: [f64; 2],
    pub row_step: f64,
}

impl Default for MatchSpec {
    fn default() -> Self {
        Self {
            match_threshold: 1.5,
            near_band: [0.0, 40.0],
            far_band: [40.0, 100.0],
            row_step: 0.5,
        }
    }
}

impl MatchSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.match_threshold.is_finite() && self.match_threshold > 0.0) {
            return Err(format!("match threshold must be positive, got {}", self.match_threshold));
        }
        if !(self.row_step.is_finite() && self.row_step > 0.0) {
            return Err(format!("row step must be positive, got {}", self.row_step));
        }
        for b in [self.near_band, self.far_band] {
            if !(b[0].is_finite() && b[1].is_finite() && b[0] < b[1]) {
                return Err(format!("band {b:?} must satisfy lo < hi"));
            }
        }
        let [a, b] = [self.near_band, self.far_band];
        if a[0] < b[1] && b[0] < a[1] {
            return Err(format!("bands {a:?} and {b:?} overlap"));
        }
        Ok(())
    }

    fn rows(&self) -> impl Iterator<Item = f64> + '_ {
        let lo = self.near_band[0].min(self.far_band[0]);
        let hi = self.near_band[1].max(self.far_band[1]);
        let first = (lo / self.row_step - 0.5).ceil() as i64;
        let last = (hi / self.row_step - 0.5).ceil() as i64;
        (first..last).map(move |k| (k as f64 + 0.5) * self.row_step)
    }

    fn band_of(&self, y: f64) -> Option<Band> {
        let inside = |b: [f64; 2]| b[0] <= y && y < b[1];
        if inside(self.near_band) {
            Some(Band::Near)
        } else if inside(self.far_band) {
            Some(Band::Far)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Band {
    Near,
    Far,
}

/// A polyline sampled on the evaluation rows: `(y, x, z)` where defined.
#[derive(Debug, Clone, PartialEq)]
struct RowSamples(Vec<Option<(f64, f64, f64)>>);

fn sample_rows(polyline: &[[f64; 3]], spec: &MatchSpec) -> RowSamples {
    let (lo, hi) = polyline
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p[1]), h.max(p[1])));
    RowSamples(
        spec.rows()
            .map(|y| {
                if polyline.len() == 1 {
                    return (polyline[0][1] == y).then_some((y, polyline[0][0], polyline[0][2]));
                }
                if y < lo || y > hi {
                    return None;
                }
                row_crossing(polyline, y).map(|(x, z)| (y, x, z))
            })
            .collect(),
    )
}

/// Shared rows as `(y, |Δx|, |Δz|)`.
fn shared_rows(a: &RowSamples, b: &RowSamples) -> Vec<(f64, f64, f64)> {
    a.0.iter()
        .zip(&b.0)
        .filter_map(|(p, q)| match (p, q) {
            (Some((y, xa, za)), Some((_, xb, zb))) => Some((*y, (xa - xb).abs(), (za - zb).abs())),
            _ => None,
        })
        .collect()
}

/// Mean lateral gap over shared rows, or `None` when incompatible.
fn pair_cost(a: &RowSamples, b: &RowSamples, spec: &MatchSpec) -> Option<f64> {
    let rows = shared_rows(a, b);
    if rows.is_empty() {
        return None;
    }
    let cost = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    (cost <= spec.match_threshold).then_some(cost)
}

/// Compatibility costs, `cost[p][g]`.
pub fn cost_matrix(pred: &[Vec<[f64; 3]>], gt: &[Vec<[f64; 3]>], spec: &MatchSpec) -> Vec<Vec<Option<f64>>> {
    let ps: Vec<RowSamples> = pred.iter().map(|p| sample_rows(p, spec)).collect();
    let gs: Vec<RowSamples> = gt.iter().map(|g| sample_rows(g, spec)).collect();
    ps.iter()
        .map(|p| gs.iter().map(|g| pair_cost(p, g, spec)).collect())
        .collect()
}

/// Hungarian algorithm on a square cost matrix; returns the column of each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Result of matching one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Matched `(pred, gt, cost)` triples, sorted by pred index.
    pub pairs: Vec<(usize, usize, f64)>,
    pub n_pred: usize,
    pub n_gt: usize,
    /// Per matched pair: shared rows as `(y, |Δx|, |Δz|)`.
    rows: Vec<Vec<(f64, f64, f64)>>,
}

impl Assignment {
    pub fn total_cost(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).sum()
    }
}

/// Maximum-cardinality, minimum-cost one-to-one matching over compatible pairs.
pub fn match_polylines(pred: &[Vec<[f64; 3]>], gt: &[Vec<[f64; 3]>], spec: &MatchSpec) -> Assignment {
    let ps: Vec<RowSamples> = pred.iter().map(|p| sample_rows(p, spec)).collect();
    let gs: Vec<RowSamples> = gt.iter().map(|g| sample_rows(g, spec)).collect();
    let costs: Vec<Vec<Option<f64>>> = ps
        .iter()
        .map(|p| gs.iter().map(|g| pair_cost(p, g, spec)).collect())
        .collect();
    let n = pred.len().max(gt.len());
    let mut pairs = Vec::new();
    if n > 0 {
        // Every compatible cost is at most the threshold, so a penalty above
        // n * threshold makes one extra match outweigh any cost difference.
        let penalty = (n as f64 + 1.0) * spec.match_threshold * 2.0 + 1.0;
        let square: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| costs.get(i).and_then(|r| r.get(j)).copied().flatten().unwrap_or(penalty))
                    .collect()
            })
            .collect();
        for (i, j) in hungarian(&square).into_iter().enumerate() {
            if let Some(c) = costs.get(i).and_then(|r| r.get(j)).copied().flatten() {
                pairs.push((i, j, c));
            }
        }
    }
    let rows = pairs.iter().map(|&(i, j, _)| shared_rows(&ps[i], &gs[j])).collect();
    Assignment {
        pairs,
        n_pred: pred.len(),
        n_gt: gt.len(),
        rows,
    }
}

/// Sums that reduce associatively across frames.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSums {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub x_near: f64,
    pub x_far: f64,
    pub z_near: f64,
    pub z_far: f64,
    pub n_near: usize,
    pub n_far: usize,
}

impl MetricSums {
    pub fn from_assignment(a: &Assignment, spec: &MatchSpec) -> Self {
        let tp = a.pairs.len();
        let mut s = MetricSums {
            tp,
            fp: a.n_pred - tp,
            fn_: a.n_gt - tp,
            ..Default::default()
        };
        for &(y, dx, dz) in a.rows.iter().flatten() {
            match spec.band_of(y) {
                Some(Band::Near) => {
                    s.x_near += dx;
                    s.z_near += dz;
                    s.n_near += 1;
                }
                Some(Band::Far) => {
                    s.x_far += dx;
                    s.z_far += dz;
                    s.n_far += 1;
                }
                None => {}
            }
        }
        s
    }

    pub fn merge(&self, o: &MetricSums) -> MetricSums {
        MetricSums {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            x_near: self.x_near + o.x_near,
            x_far: self.x_far + o.x_far,
            z_near: self.z_near + o.z_near,
            z_far: self.z_far + o.z_far,
            n_near: self.n_near + o.n_near,
            n_far: self.n_far + o.n_far,
        }
    }

    pub fn report(&self) -> MetricsReport {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let mean = |sum: f64, n: usize| (n > 0).then(|| sum / n as f64);
        MetricsReport {
            f1,
            precision,
            recall,
            x_err_near: mean(self.x_near, self.n_near),
            x_err_far: mean(self.x_far, self.n_far),
            z_err_near: mean(self.z_near, self.n_near),
            z_err_far: mean(self.z_far, self.n_far),
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            degenerate: self.tp + self.fp == 0 || self.tp + self.fn_ == 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub x_err_near: Option<f64>,
    pub x_err_far: Option<f64>,
    pub z_err_near: Option<f64>,
    pub z_err_far: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Precision or recall had an empty denominator and was set to 0.
    pub degenerate: bool,
}

pub fn score(assignment: &Assignment, spec: &MatchSpec) -> MetricsReport {
    MetricSums::from_assignment(assignment, spec).report()
}

/// Match and score one frame.
pub fn evaluate(pred: &[Vec<[f64; 3]>], gt: &[Vec<[f64; 3]>], spec: &MatchSpec) -> MetricsReport {
    score(&match_polylines(pred, gt, spec), spec)
}
