//! Generate a labeled fuselage scene with its camera ring and ground-truth
//! boxes, and write it the way `jddl simulate` does.
//!
//!     cargo run --release --example simulate [-- <seed> [<out-dir>]]

use std::path::PathBuf;

use jddl::annotations::write_coco;
use jddl::error::Error;
use jddl::pointcloud::write_ply;
use jddl::simulator::{
    default_rig_spec, generate_camera_ring, generate_scene, ground_truth_annotations, random_scene_spec, Visibility,
};

fn main() -> jddl::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));
    let out: PathBuf = args.next().map_or_else(|| std::env::temp_dir().join("jddl-scene"), PathBuf::from);

    let spec = random_scene_spec(seed);
    let (around, along) = spec.lattice();
    let scene = generate_scene(&spec)?;
    println!("lattice {around} x {along} = {} points", scene.cloud.len());
    for (k, p) in spec.patches.iter().enumerate() {
        println!(
            "patch {}: class {} at z = {:.2} m, azimuth {:.0}°, radius {:.2} m, {} points",
            k + 1,
            p.class_id,
            p.axial,
            p.azimuth.to_degrees(),
            p.radius,
            scene.patch_points(k as u32 + 1).count()
        );
    }

    let cameras = generate_camera_ring(&default_rig_spec(&spec.fuselage), &spec.fuselage)?;
    let truth = ground_truth_annotations(&scene, &cameras, Visibility { cell: 8.0, depth_tolerance: 0.01 })?;
    for a in truth.annotations() {
        let b = a.bbox;
        println!("{}: class {} box [{:.1}, {:.1}, {:.1}, {:.1}]", a.image_id, a.class_id, b.x_min(), b.y_min(), b.x_max(), b.y_max());
    }

    std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    let write = |name: &str, text: String| {
        let p = out.join(name);
        std::fs::write(&p, text).map_err(|e| Error::Io { path: p, source: e })
    };
    write("scene.ply", write_ply(&scene.cloud, None)?)?;
    write("ground_truth.json", write_coco(&truth))?;
    for (i, cam) in cameras.iter().enumerate() {
        write(&format!("cam{i}.json"), cam.to_json_string())?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
