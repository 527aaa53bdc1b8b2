//! Greedy embedding clustering of BEV head outputs into 3D polylines.

use serde::{Deserialize, Serialize};

use super::{dist, sigmoid, HeadOutput};
use crate::labelgen::BevGridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub conf_threshold: f64,
    /// Cells closer than this (embedding distance) to a cluster mean join it.
    pub embed_radius: f64,
    /// Clusters with fewer cells are discarded.
    pub min_cells: usize,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            conf_threshold: 0.5,
            embed_radius: 1.5,
            min_cells: 2,
        }
    }
}

/// Decodes head outputs into BEV-frame centerlines, each sorted by `y`.
///
/// Seeds are taken in decreasing confidence order. A cluster absorbs every
/// unassigned candidate within `embed_radius` of its running mean, sweeping
/// the candidates until nothing more joins. Within a cluster, the most
/// confident cell of each row yields one point.
pub fn decode_bev(out: &HeadOutput, grid: &BevGridSpec, params: &DecodeParams) -> Vec<Vec<[f64; 3]>> {
    let s1 = out.s1;
    let dim = out.embed_dim;
    let embedding = |i: usize| &out.embed[i * dim..(i + 1) * dim];
    let mut candidates: Vec<usize> = (0..out.conf.len())
        .filter(|&i| out.conf[i] >= params.conf_threshold)
        .collect();
    candidates.sort_by(|&a, &b| out.conf[b].total_cmp(&out.conf[a]).then(a.cmp(&b)));

    let mut assigned = vec![false; out.conf.len()];
    let mut polylines = Vec::new();
    for &seed in &candidates {
        if assigned[seed] {
            continue;
        }
        assigned[seed] = true;
        let mut members = vec![seed];
        let mut mean = embedding(seed).to_vec();
        loop {
            let mut grew = false;
            for &c in &candidates {
                if assigned[c] || dist(embedding(c), &mean) >= params.embed_radius {
                    continue;
                }
                assigned[c] = true;
                members.push(c);
                let n = members.len() as f64;
                for (m, x) in mean.iter_mut().zip(embedding(c)) {
                    *m += (x - *m) / n;
                }
                grew = true;
            }
            if !grew {
                break;
            }
        }
        if members.len() < params.min_cells {
            continue;
        }
        // Best cell per row.
        let mut best: std::collections::BTreeMap<usize, usize> = Default::default();
        for &m in &members {
            let row = m / s1;
            let e = best.entry(row).or_insert(m);
            if out.conf[m] > out.conf[*e] || (out.conf[m] == out.conf[*e] && m < *e) {
                *e = m;
            }
        }
        polylines.push(
            best.into_iter()
                .map(|(row, idx)| {
                    let col = idx % s1;
                    [
                        grid.cell_left(col) + sigmoid(out.x_offset_logits[idx]) * grid.cell,
                        grid.row_center(row),
                        out.height[idx],
                    ]
                })
                .collect(),
        );
    }
    polylines
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelgen::encode_bev;

    #[test]
    fn straight_lane_round_trip() {
        let grid = BevGridSpec::default();
        let lane = vec![[1.3, 0.0, 0.0], [1.3, 100.0, 0.0]];
        let targets = encode_bev(&[lane], &grid);
        let out = HeadOutput::from_targets(&targets, 4, 10.0);
        let decoded = decode_bev(&out, &grid, &DecodeParams::default());
        assert_eq!(decoded.len(), 1);
        assert_eq!(decoded[0].len(), grid.s2());
        for (row, p) in decoded[0].iter().enumerate() {
            assert!((p[0] - 1.3).abs() < 1e-9);
            assert_eq!(p[1], grid.row_center(row));
        }
    }

    #[test]
    fn separable_lanes_stay_apart() {
        let grid = BevGridSpec::default();
        let lanes = vec![
            vec![[-1.75, 0.0, 0.0], [-1.75, 50.0, 0.0]],
            vec![[1.75, 0.0, 0.0], [1.75, 50.0, 0.0]],
        ];
        let out = HeadOutput::from_targets(&encode_bev(&lanes, &grid), 4, 10.0);
        assert_eq!(decode_bev(&out, &grid, &DecodeParams::default()).len(), 2);
    }

    #[test]
    fn low_confidence_decodes_to_nothing() {
        let grid = BevGridSpec::default();
        let lanes = vec![vec![[0.2, 0.0, 0.0], [0.2, 50.0, 0.0]]];
        let mut out = HeadOutput::from_targets(&encode_bev(&lanes, &grid), 4, 10.0);
        out.conf.iter_mut().for_each(|c| *c *= 0.4);
        assert!(decode_bev(&out, &grid, &DecodeParams::default()).is_empty());
    }

    #[test]
    fn tiny_clusters_are_dropped() {
        let grid = BevGridSpec::default();
        let lanes = vec![vec![[0.2, 10.0, 0.0], [0.2, 10.4, 0.0]]];
        let out = HeadOutput::from_targets(&encode_bev(&lanes, &grid), 4, 10.0);
        assert!(decode_bev(&out, &grid, &DecodeParams::default()).is_empty());
        let keep_all = DecodeParams { min_cells: 1, ..Default::default() };
        assert_eq!(decode_bev(&out, &grid, &keep_all).len(), 1);
    }
}
