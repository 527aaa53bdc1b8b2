use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;

use clf::geom::{camera_to_city, city_to_camera, slerp, CameraModel, Pose, Trajectory, Vec3};

fn rotation() -> impl Strategy<Value = UnitQuaternion<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.0..3.1f64).prop_filter_map("axis", |(x, y, z, angle)| {
        let axis = Vector3::new(x, y, z);
        (axis.norm() > 1e-3).then(|| UnitQuaternion::from_scaled_axis(axis.normalize() * angle))
    })
}

fn point(scale: f64) -> impl Strategy<Value = Vec3> {
    (-scale..scale, -scale..scale, -scale..scale).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn pose() -> impl Strategy<Value = Pose> {
    (rotation(), point(500.0)).prop_map(|(r, t)| Pose::from_parts(r, t))
}

fn same_rotation(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> bool {
    a.angle_to(b) < 1e-7
}

/// Slerp written as a relative rotation scaled along its axis.
fn axis_angle_slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, s: f64) -> UnitQuaternion<f64> {
    let mut rel = a.inverse() * b;
    if rel.w < 0.0 {
        rel = UnitQuaternion::new_unchecked(-rel.into_inner());
    }
    a * UnitQuaternion::from_scaled_axis(rel.scaled_axis() * s)
}

proptest! {
    #[test]
    fn inverse_composes_to_identity(p in pose(), x in point(100.0)) {
        let back = p.inverse().transform_point(&p.transform_point(&x));
        prop_assert!((back - x).norm() < 1e-9);
        let (dt, dr) = p.compose(&p.inverse()).distance_to(&Pose::identity());
        prop_assert!(dt < 1e-9 && dr < 1e-9);
    }

    #[test]
    fn composition_is_associative(a in pose(), b in pose(), c in pose(), x in point(50.0)) {
        let left = a.compose(&b).compose(&c).transform_point(&x);
        let right = a.compose(&b.compose(&c)).transform_point(&x);
        prop_assert!((left - right).norm() < 1e-8);
    }

    #[test]
    fn slerp_matches_axis_angle(a in rotation(), b in rotation(), s in 0.0..=1.0f64) {
        prop_assert!(same_rotation(&slerp(&a, &b, s), &axis_angle_slerp(&a, &b, s)));
    }

    #[test]
    fn slerp_hits_endpoints(a in rotation(), b in rotation()) {
        prop_assert!(same_rotation(&slerp(&a, &b, 0.0), &a));
        prop_assert!(same_rotation(&slerp(&a, &b, 1.0), &b));
    }

    #[test]
    fn slerp_ignores_quaternion_sign(a in rotation(), b in rotation(), s in 0.0..=1.0f64) {
        let neg = UnitQuaternion::new_unchecked(-b.into_inner());
        prop_assert!(same_rotation(&slerp(&a, &b, s), &slerp(&a, &neg, s)));
    }

    #[test]
    fn trajectory_interpolation_is_bracketed(
        a in pose(),
        b in pose(),
        dt in 1i64..1_000_000_000,
        frac in 0.0..=1.0f64,
    ) {
        let t0 = 1_000_000;
        let traj = Trajectory::new(vec![a.with_timestamp(t0), b.with_timestamp(t0 + dt)]).unwrap();
        let t = t0 + (frac * dt as f64).round() as i64;
        let p = traj.interpolate(t).unwrap();
        let s = (t - t0) as f64 / dt as f64;
        let want = a.translation() * (1.0 - s) + b.translation() * s;
        prop_assert!((p.translation() - want).norm() < 1e-9);
        prop_assert!(same_rotation(p.rotation(), &axis_angle_slerp(a.rotation(), b.rotation(), s)));
        prop_assert!(traj.interpolate(t0 - 1).is_err());
        prop_assert!(traj.interpolate(t0 + dt + 1).is_err());
    }

    #[test]
    fn city_camera_round_trip(ego in pose(), mount in pose(), x in point(1000.0)) {
        let cam = CameraModel::new(1000.0, 1000.0, 512.0, 288.0, 1024, 576, mount).unwrap();
        let back = camera_to_city(&city_to_camera(&x, &ego, &cam), &ego, &cam);
        prop_assert!((back - x).norm() < 1e-9);
        let via_transform = cam.city_to_camera_transform(&ego).transform_point(&x);
        prop_assert!((via_transform - city_to_camera(&x, &ego, &cam)).norm() < 1e-9);
    }

    #[test]
    fn projection_is_invariant_along_rays(u in 0.0..1024.0f64, v in 0.0..576.0f64, d in 0.2..100.0f64, k in 0.5..2.0f64) {
        let cam = CameraModel::new(800.0, 820.0, 500.0, 300.0, 1024, 576, Pose::identity()).unwrap();
        let p = cam.unproject(u, v, d);
        let (a, b) = (cam.project(&p).unwrap(), cam.project(&(p * k)).unwrap());
        prop_assert!((a.u - b.u).abs() < 1e-9 && (a.v - b.v).abs() < 1e-9);
        prop_assert!((b.depth - d * k).abs() < 1e-9);
    }
}
