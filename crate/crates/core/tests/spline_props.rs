use proptest::prelude::*;

use clf::labelgen::spline::CatmullRom;
use clf::labelgen::{fit_spline_2d, resample_3d};

/// Centripetal Catmull-Rom point via the Barry-Goldman pyramid, with the
/// same reflected end conditions.
fn barry_goldman(points: &[[f64; 2]], segment: usize, s: f64) -> [f64; 2] {
    let n = points.len();
    let ctrl = |i: isize| -> [f64; 2] {
        if i < 0 {
            [2.0 * points[0][0] - points[1][0], 2.0 * points[0][1] - points[1][1]]
        } else if i as usize >= n {
            [2.0 * points[n - 1][0] - points[n - 2][0], 2.0 * points[n - 1][1] - points[n - 2][1]]
        } else {
            points[i as usize]
        }
    };
    let i = segment as isize;
    let p = [ctrl(i - 1), ctrl(i), ctrl(i + 1), ctrl(i + 2)];
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let mut t = [0.0; 4];
    for k in 1..4 {
        t[k] = t[k - 1] + dist(p[k - 1], p[k]).sqrt();
    }
    let tt = t[1] + s * (t[2] - t[1]);
    let lerp = |a: [f64; 2], b: [f64; 2], ta: f64, tb: f64| -> [f64; 2] {
        let (wa, wb) = ((tb - tt) / (tb - ta), (tt - ta) / (tb - ta));
        [wa * a[0] + wb * b[0], wa * a[1] + wb * b[1]]
    };
    let a1 = lerp(p[0], p[1], t[0], t[1]);
    let a2 = lerp(p[1], p[2], t[1], t[2]);
    let a3 = lerp(p[2], p[3], t[2], t[3]);
    let b1 = lerp(a1, a2, t[0], t[2]);
    let b2 = lerp(a2, a3, t[1], t[3]);
    lerp(b1, b2, t[1], t[2])
}

fn s_curve() -> Vec<[f64; 2]> {
    (0..=16)
        .map(|k| {
            let x = k as f64 * 2.5;
            [x, 6.0 * (x / 40.0 * std::f64::consts::TAU).sin()]
        })
        .collect()
}

fn dense_oracle(points: &[[f64; 2]], per_segment: usize) -> Vec<[f64; 2]> {
    let mut out = vec![points[0]];
    for seg in 0..points.len() - 1 {
        for k in 1..=per_segment {
            out.push(barry_goldman(points, seg, k as f64 / per_segment as f64));
        }
    }
    out
}

fn cumulative(points: &[[f64; 2]]) -> Vec<f64> {
    let mut acc = vec![0.0];
    for w in points.windows(2) {
        let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        acc.push(acc.last().unwrap() + d);
    }
    acc
}

#[test]
fn quarter_circle_stays_on_radius() {
    // Vertices every 5 degrees; the reflected end conditions bend the first
    // and last spans, so the arc is padded by one span on each side.
    let r = 10.0;
    let vertices: Vec<[f64; 3]> = (-1..=19)
        .map(|k| {
            let a = k as f64 * 5f64.to_radians();
            [r * a.cos(), r * a.sin(), 0.0]
        })
        .collect();
    let samples = resample_3d(&vertices, 0.5).unwrap();
    let quarter: Vec<_> = samples.iter().filter(|p| p[0] >= 0.0 && p[1] >= 0.0).collect();
    assert!(quarter.len() > 30);
    for p in &quarter {
        assert!((p[0].hypot(p[1]) - r).abs() < 2e-5, "{p:?} at radius {}", p[0].hypot(p[1]));
    }
    let want = 2.0 * r * (0.25 / r).sin();
    for w in quarter.windows(2) {
        let chord = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        assert!((chord - want).abs() < 1e-5, "chord {chord}");
    }
    assert_eq!(samples[0], vertices[0]);
    assert_eq!(*samples.last().unwrap(), vertices[20]);
}

#[test]
fn s_curve_matches_barry_goldman() {
    let pts = s_curve();
    let spline = CatmullRom::new(&pts).unwrap();
    for seg in 0..pts.len() - 1 {
        for k in 0..=20 {
            let s = k as f64 / 20.0;
            let (a, b) = (spline.eval(seg, s), barry_goldman(&pts, seg, s));
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9, "segment {seg} s {s}");
        }
    }
}

#[test]
fn s_curve_arc_length_matches_dense_oracle() {
    let pts = s_curve();
    let spline = CatmullRom::new(&pts).unwrap();
    let dense = dense_oracle(&pts, 4000);
    let acc = cumulative(&dense);
    let total = *acc.last().unwrap();
    assert!((spline.total_length() - total).abs() < 1e-5, "{} vs {total}", spline.total_length());

    for p in spline.sample_uniform(0.7) {
        let nearest = dense
            .iter()
            .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-3, "sample {p:?} is {nearest} off the curve");
    }
    for k in 1..20 {
        let target = total * k as f64 / 20.0;
        let i = acc.partition_point(|a| *a < target);
        let w = (target - acc[i - 1]) / (acc[i] - acc[i - 1]);
        let want = [
            dense[i - 1][0] + w * (dense[i][0] - dense[i - 1][0]),
            dense[i - 1][1] + w * (dense[i][1] - dense[i - 1][1]),
        ];
        let got = spline.point_at_length(target);
        let err = ((got[0] - want[0]).powi(2) + (got[1] - want[1]).powi(2)).sqrt();
        assert!(err < 1e-5, "at length {target}: {err}");
    }
}

fn polyline_2d() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec([-500.0..500.0f64, -500.0..500.0f64], 2..10).prop_filter("spread", |p| {
        p.windows(2).all(|w| ((w[0][0] - w[1][0]).powi(2) + (w[0][1] - w[1][1]).powi(2)).sqrt() > 1.0)
    })
}

proptest! {
    #[test]
    fn interpolates_every_vertex(pts in polyline_2d()) {
        let spline = CatmullRom::new(&pts).unwrap();
        for (seg, w) in pts.windows(2).enumerate() {
            let (a, b) = (spline.eval(seg, 0.0), spline.eval(seg, 1.0));
            prop_assert!((a[0] - w[0][0]).abs() < 1e-9 && (a[1] - w[0][1]).abs() < 1e-9);
            prop_assert!((b[0] - w[1][0]).abs() < 1e-9 && (b[1] - w[1][1]).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_samples_keep_endpoints_and_step(pts in polyline_2d(), step in 0.5..20.0f64) {
        let out = fit_spline_2d(&pts, step).unwrap();
        prop_assert_eq!(out[0], pts[0]);
        prop_assert_eq!(*out.last().unwrap(), *pts.last().unwrap());
        let spline = CatmullRom::new(&pts).unwrap();
        let expected = (spline.total_length() / step + 1e-9).floor() as usize + 1;
        prop_assert!(out.len() == expected || out.len() == expected + 1);
        for w in out.windows(2) {
            let chord = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            prop_assert!(chord <= step * (1.0 + 1e-9));
        }
    }

    #[test]
    fn two_points_give_a_straight_line(a in [-100.0..100.0f64, -100.0..100.0f64, -10.0..10.0f64], d in [1.0..50.0f64, -50.0..-1.0f64, -2.0..2.0f64], step in 0.1..3.0f64) {
        let b = [a[0] + d[0], a[1] + d[1], a[2] + d[2]];
        let out = resample_3d(&[a, b], step).unwrap();
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        for (k, p) in out.iter().enumerate() {
            let s = (k as f64 * step).min(len) / len;
            for i in 0..3 {
                prop_assert!((p[i] - (a[i] + s * d[i])).abs() < 1e-8);
            }
        }
    }
}
