use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use proptest::prelude::*;

use clf::geom::{CameraModel, Pose, Vec3};
use clf::ingest::{LaneSegment, SemanticMask};
use clf::labelgen::{
    decimate_by_pixel_gap, encode_bev, geometric_filters, polyline_length, project_centerline, sample_windows,
    BevGridSpec, CenterlineLabel, FilterParams, Keypoint,
};
use clf::occlusion::{filter_keypoints, Category, OcclusionOntology};

fn front_camera() -> CameraModel {
    let axes = Rotation3::from_matrix_unchecked(Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0));
    let mount = Pose::from_parts(UnitQuaternion::from_rotation_matrix(&axes), Vec3::new(1.5, 0.0, 1.6));
    CameraModel::new(900.0, 900.0, 512.0, 288.0, 1024, 576, mount).unwrap()
}

fn striped_mask(seed: u8) -> SemanticMask {
    let (w, h) = (1024u32, 576u32);
    let labels = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            [13u8, 27, 1, 2, 8][((x / 37 + y / 29) as usize + seed as usize) % 5]
        })
        .collect();
    SemanticMask::new(w, h, labels).unwrap()
}

fn lane() -> impl Strategy<Value = Vec<[f64; 3]>> {
    (-20.0..20.0f64, -6.0..6.0f64, -0.2..0.2f64, -0.05..0.05f64, 3usize..8).prop_map(|(x0, y0, dy, dz, n)| {
        (0..n)
            .map(|k| {
                let s = k as f64 * 12.0;
                [x0 + s, y0 + dy * s + 0.01 * s * s * dy, dz * s]
            })
            .collect()
    })
}

fn category() -> impl Strategy<Value = Category> {
    prop_oneof![Just(Category::Valid), Just(Category::OcclusionValid), Just(Category::Invalid)]
}

fn keypoints() -> impl Strategy<Value = Vec<Keypoint>> {
    prop::collection::vec((0.0..1024.0f64, 0.0..576.0f64, 0.5..150.0f64), 0..40).prop_map(|pts| {
        pts.into_iter()
            .map(|(u, v, depth)| Keypoint {
                u,
                v,
                p_cam: [u / 100.0, v / 100.0, depth],
                depth,
                class_id: 13,
                category: Category::Valid,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn keypoints_correspond_to_their_3d_points(points in lane(), spacing in 0.3..2.0f64, seed in 0u8..5) {
        let ontology = OcclusionOntology::default();
        let cam = front_camera();
        let mask = striped_mask(seed);
        let lane = LaneSegment { lane_id: 1, centerline: points, left_boundary: None, right_boundary: None, is_intersection: false };
        let ego = Pose::from_parts(UnitQuaternion::from_euler_angles(0.0, 0.0, 0.1), Vec3::new(3.0, -1.0, 0.0));
        let label = project_centerline(&lane, &ego, &cam, &mask, &ontology, spacing).unwrap();
        for kp in &label.keypoints {
            let p = cam.project(&Vec3::from(kp.p_cam)).unwrap();
            prop_assert!((p.u - kp.u).hypot(p.v - kp.v) <= 0.5);
            prop_assert_eq!(kp.depth, kp.p_cam[2]);
            let class = mask.get(kp.u.round() as i64, kp.v.round() as i64).unwrap();
            prop_assert_eq!(kp.class_id, class);
            prop_assert_eq!(kp.category, ontology.categorize(class));
        }
    }

    #[test]
    fn decimation_keeps_a_min_gap(kps in keypoints(), gap in 0.0..200.0f64) {
        let out = decimate_by_pixel_gap(&kps, gap);
        prop_assert_eq!(out.first(), kps.first());
        for w in out.windows(2) {
            prop_assert!((w[1].u - w[0].u).hypot(w[1].v - w[0].v) >= gap);
        }
        let mut it = kps.iter();
        for k in &out {
            prop_assert!(it.any(|x| x == k), "output is an ordered subsequence");
        }
        prop_assert_eq!(decimate_by_pixel_gap(&out, gap), out);
    }

    #[test]
    fn geometric_filters_enforce_their_limits(kps in keypoints(), max_depth in 10.0..150.0f64, min_keypoints in 2usize..6, min_length in 0.0..20.0f64) {
        let params = FilterParams { max_depth, min_keypoints, min_length, ..FilterParams::default() };
        let label = CenterlineLabel { lane_id: 5, is_intersection: false, keypoints: kps, r_occ: None };
        if let Some(out) = geometric_filters(&label, &params) {
            prop_assert!(out.keypoints.iter().all(|k| k.depth <= max_depth));
            prop_assert!(out.keypoints.len() >= min_keypoints);
            prop_assert!(polyline_length(out.keypoints.iter().map(|k| k.p_cam)) >= min_length);
            prop_assert_eq!(geometric_filters(&out, &params), Some(out.clone()));
        }
        let crossing = CenterlineLabel { is_intersection: true, ..label };
        prop_assert!(geometric_filters(&crossing, &params).is_none());
    }

    #[test]
    fn occlusion_filter_is_idempotent(frame in prop::collection::vec(prop::collection::vec(category(), 1..25), 0..8), t in 0.0..=1.0f64) {
        let ontology = OcclusionOntology::default();
        let ids: Vec<Vec<u8>> = frame.iter().map(|c| c.iter().map(|c| ontology.representative(*c).unwrap()).collect()).collect();
        let once = filter_keypoints(&ids, &ids, &ontology, t).unwrap();
        let twice = filter_keypoints(&once.filtered, &once.filtered, &ontology, t).unwrap();
        prop_assert_eq!(&twice.filtered, &once.filtered);
        prop_assert!(twice.verdicts.iter().all(|v| v.n_total == v.kept.len()));
    }

    #[test]
    fn encode_bev_marks_one_cell_per_lane_and_row(lanes in prop::collection::vec(lane(), 1..5)) {
        let grid = BevGridSpec::default();
        // Map ego-like lanes into the BEV frame.
        let bev: Vec<Vec<[f64; 3]>> = lanes.iter().map(|l| l.iter().map(|p| [-p[1], p[0], p[2]]).collect()).collect();
        let t = encode_bev(&bev, &grid);
        let s1 = grid.s1();
        for row in 0..grid.s2() {
            for inst in 1..=bev.len() as u32 {
                let n = (0..s1).filter(|c| t.instance[row * s1 + c] == inst).count();
                prop_assert!(n <= 1);
            }
        }
        for i in 0..t.seg.len() {
            prop_assert_eq!(t.seg[i] == 1, t.instance[i] > 0);
            prop_assert_eq!(t.seg[i] == 1, t.x_offset[i].is_some());
            if let Some(dx) = t.x_offset[i] {
                prop_assert!((0.0..1.0).contains(&dx));
            }
        }
        for (inst, poly) in t.polylines() {
            let src = &bev[inst as usize - 1];
            for p in poly {
                let (x, z) = clf::labelgen::bev::row_crossing(src, p[1]).unwrap();
                prop_assert!((x - p[0]).abs() < 1e-9 && (z - p[2]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn windows_draw_one_index_each(n in 0usize..500, window in 1usize..50, seed in any::<u64>()) {
        let picks = sample_windows(n, window, seed);
        prop_assert_eq!(picks.len(), n.div_ceil(window));
        for (k, &i) in picks.iter().enumerate() {
            prop_assert!(i >= k * window && i < ((k + 1) * window).min(n));
        }
        prop_assert_eq!(sample_windows(n, window, seed), picks);
    }
}
