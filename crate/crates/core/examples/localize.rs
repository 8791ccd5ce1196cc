//! Lift ground-truth damage boxes from a simulated four-camera inspection
//! onto the fuselage point cloud and report what each box selects.
//!
//!     cargo run --release --example localize [-- <seed> [<out-dir>]]

use std::path::PathBuf;

use jddl::localization::{color_cloud, localize_detections, LocalizationOptions, SelectionMode};
use jddl::pointcloud::write_ply;
use jddl::simulator::{
    default_rig_spec, generate_camera_ring, generate_scene, ground_truth_bbox, random_scene_spec, Visibility,
};

fn main() -> jddl::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));
    let out: PathBuf = args.next().map_or_else(|| std::env::temp_dir().join("jddl-localize"), PathBuf::from);

    let spec = random_scene_spec(seed);
    let scene = generate_scene(&spec)?;
    let cameras = generate_camera_ring(&default_rig_spec(&spec.fuselage), &spec.fuselage)?;
    println!("scene {seed}: {} points, {} patches, {} cameras", scene.cloud.len(), spec.patches.len(), cameras.len());

    let vis = Visibility { cell: 8.0, depth_tolerance: 0.01 };
    let options = LocalizationOptions {
        occlusion_culling: true,
        zbuffer_cell: vis.cell,
        depth_tolerance: vis.depth_tolerance,
        selection_mode: SelectionMode::OriginalPoints,
    };
    let labels = scene.labels();
    let mut all = Vec::new();
    for (c, cam) in cameras.iter().enumerate() {
        let boxes: Vec<_> = (1..=spec.patches.len() as u32)
            .filter_map(|k| ground_truth_bbox(&scene, k, cam, vis).map(|b| (k, b)))
            .collect();
        let detections: Vec<_> = boxes.iter().map(|(k, b)| (*b, spec.patches[*k as usize - 1].class_id)).collect();
        let results = localize_detections(&detections, cam, &scene.cloud, &options)?;
        for ((k, b), r) in boxes.iter().zip(&results) {
            let on_patch = r.indices.iter().filter(|&&i| labels[i] == *k).count();
            let centroid = r.centroid.expect("visible patches select points");
            println!(
                "cam{c} patch {k} box [{:.0}, {:.0}, {:.0}, {:.0}]: {} points, {on_patch} on the patch, centroid ({:.2}, {:.2}, {:.2})",
                b.x_min(),
                b.y_min(),
                b.x_max(),
                b.y_max(),
                r.indices.len(),
                centroid.x,
                centroid.y,
                centroid.z
            );
        }
        all.extend(results);
    }

    std::fs::create_dir_all(&out).map_err(|e| jddl::error::Error::Io { path: out.clone(), source: e })?;
    let path = out.join("colored.ply");
    let ply = write_ply(&scene.cloud, Some(&color_cloud(scene.cloud.len(), &all)))?;
    std::fs::write(&path, ply).map_err(|e| jddl::error::Error::Io { path: path.clone(), source: e })?;
    println!("wrote {}", path.display());
    Ok(())
}
