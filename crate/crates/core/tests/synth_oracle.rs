use clf::labelgen::record::ClabelFile;
use clf::occlusion::{Category, OcclusionOntology};
use clf::pipeline::{FrameLabeler, LabelConfig};
use clf::synth::{generate, Occluder, SceneSpec};

fn max_errors(spec: &SceneSpec) -> (f64, f64, usize) {
    let b = generate(spec).unwrap();
    let ont = OcclusionOntology::default();
    let cfg = LabelConfig { t_occ: None, grid: None, filter: spec.filter, ..Default::default() };
    let labeler = FrameLabeler::new(&b.map, &b.trajectory, &b.calibration, &ont, cfg).unwrap();
    let (mut px, mut m, mut n) = (0.0f64, 0.0f64, 0);
    for f in &b.frames {
        let got: ClabelFile = labeler.label_frame(&f.camera, f.t_ns, &f.mask).unwrap().clabel;
        let want = f.expected_clabel();
        assert_eq!(got.centerlines.len(), want.centerlines.len(), "{}", f.key());
        for (g, w) in got.centerlines.iter().zip(&want.centerlines) {
            assert_eq!(g.lane_id, w.lane_id);
            assert_eq!(g.keypoints.len(), w.keypoints.len(), "{} lane {}", f.key(), g.lane_id);
            assert_eq!(g.r_occ, w.r_occ);
            for (a, e) in g.keypoints.iter().zip(&w.keypoints) {
                px = px.max((a.u - e.u).abs()).max((a.v - e.v).abs());
                m = m.max((a.x - e.x).abs()).max((a.y - e.y).abs()).max((a.z - e.z).abs());
                assert_eq!(a.class_id, e.class_id);
                n += 1;
            }
        }
    }
    (px, m, n)
}

#[test]
fn straight_scene_matches_oracle() {
    let spec = SceneSpec {
        n_frames: 5,
        camera_preset: "front_triplet".into(),
        occluders: vec![
            Occluder { lane: 0, start: 0.0, end: 0.3, category: Category::Invalid },
            Occluder { lane: 2, start: 0.5, end: 0.9, category: Category::OcclusionValid },
        ],
        ..Default::default()
    };
    let (px, m, n) = max_errors(&spec);
    eprintln!("straight: {px:e} px, {m:e} m over {n}");
    assert!(n > 0 && px < 1e-3 && m < 1e-6);
}

#[test]
fn curved_scene_matches_oracle() {
    for curvature in [0.01, -0.02, 0.005] {
        let spec = SceneSpec { n_frames: 3, curvature, seed: 9, ..Default::default() };
        let (px, m, n) = max_errors(&spec);
        eprintln!("curved {curvature}: {px:e} px, {m:e} m over {n}");
        assert!(n > 0 && px < 1e-3 && m < 1e-6);
    }
}
