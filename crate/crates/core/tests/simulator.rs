use std::f64::consts::TAU;

use proptest::prelude::*;

use jddl::simulator::{
    generate_camera_ring, generate_scene, random_scene_spec, CameraRigSpec, FuselageSpec, IntrinsicsSpec,
};

proptest! {
    #[test]
    fn every_ring_pose_is_a_rotation(
        count in 1usize..12,
        ring in 2.5..20.0f64,
        heights in prop::collection::vec(-5.0..15.0f64, 1..4),
    ) {
        let fuselage = FuselageSpec { radius: 2.0, length: 10.0, spacing: 0.1 };
        let rig = CameraRigSpec {
            count,
            ring_radius: ring,
            heights: heights.clone(),
            intrinsics: IntrinsicsSpec { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0 },
        };
        let cams = generate_camera_ring(&rig, &fuselage).unwrap();
        prop_assert_eq!(cams.len(), count * heights.len());
        for (i, cam) in cams.iter().enumerate() {
            let r = cam.pose.rotation();
            prop_assert!((r.transpose() * r - nalgebra::Matrix3::identity()).abs().max() <= 1e-9);
            let c = cam.pose.center();
            prop_assert!((c.xy().norm() - ring).abs() <= 1e-9);
            prop_assert!((c.z - heights[i / count]).abs() <= 1e-9);
            let azimuth = c.y.atan2(c.x).rem_euclid(TAU);
            let want = TAU * (i % count) as f64 / count as f64;
            let diff = (azimuth - want).rem_euclid(TAU);
            prop_assert!(diff.min(TAU - diff) <= 1e-9);
            // The optical axis points at the fuselage axis.
            let forward = r.row(2).transpose();
            prop_assert!((forward + c.xy().push(0.0).normalize()).norm() <= 1e-9);
        }
    }
}

#[test]
fn generation_ignores_thread_count() {
    let spec = random_scene_spec(17);
    let many = generate_scene(&spec).unwrap();
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let scene = pool.install(|| generate_scene(&spec).unwrap());
        assert_eq!(scene, many, "{threads} threads");
    }
}

#[test]
fn patch_point_counts_track_patch_area() {
    // A patch covers about π r² / s² lattice points.
    let spec = random_scene_spec(2);
    let scene = generate_scene(&spec).unwrap();
    let s = spec.fuselage.spacing;
    let (n_around, _) = spec.lattice();
    let cell_width = TAU * spec.fuselage.radius / n_around as f64;
    for (k, p) in spec.patches.iter().enumerate() {
        let expected = std::f64::consts::PI * p.radius * p.radius / (cell_width * (spec.fuselage.length / (spec.fuselage.length / s).ceil()));
        let got = scene.patch_points(k as u32 + 1).count() as f64;
        assert!((got - expected).abs() / expected < 0.1, "patch {k}: {got} vs {expected}");
    }
}
