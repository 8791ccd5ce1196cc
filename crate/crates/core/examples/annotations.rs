//! Build a small AIRSD-style annotation set, write it as COCO and YOLO, read
//! both back and print dataset statistics.
//!
//!     cargo run --example annotations [-- <out-dir>]

use std::path::{Path, PathBuf};

use jddl::annotations::{dataset_stats, parse_coco, parse_yolo, write_coco, write_yolo, AnnotationSet, ClassMap, ImageInfo};
use jddl::bbox::BBox2D;
use jddl::error::{Error, Result};
use jddl::metrics::GroundTruthRecord;

fn main() -> Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("jddl-annotations"), PathBuf::from);
    let images = vec![ImageInfo::new("fuselage_0001.jpg", 640, 640)?, ImageInfo::new("tail_0002.jpg", 1280, 720)?];
    let record = |image: &str, class: &str, b: [f64; 4]| GroundTruthRecord {
        image_id: image.into(),
        class_id: ClassMap::airsd().index_of(class).unwrap(),
        bbox: BBox2D::new(b[0], b[1], b[2], b[3]).unwrap(),
    };
    let set = AnnotationSet::new(
        images,
        vec![
            record("fuselage_0001", "dent", [120.0, 200.0, 180.0, 260.0]),
            record("fuselage_0001", "missing fastener", [400.0, 90.0, 412.0, 102.0]),
            record("tail_0002", "paint peeling", [600.0, 300.0, 900.0, 420.0]),
        ],
        ClassMap::airsd(),
    )?;

    std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    let coco_path = out.join("annotations.json");
    std::fs::write(&coco_path, write_coco(&set)).map_err(|e| Error::Io { path: coco_path.clone(), source: e })?;
    let yolo_dir = out.join("labels");
    let yolo = write_yolo(&set);
    yolo.write_to(&yolo_dir)?;
    for (name, text) in &yolo.labels {
        print!("{name}:\n{text}");
    }

    let from_coco = parse_coco(&coco_path)?;
    let from_yolo = parse_yolo(&yolo_dir, Some(&yolo_dir.join("index.csv")), ClassMap::parse_names(&yolo.classes)?)?;
    assert_eq!(from_coco.annotations().len(), from_yolo.annotations().len());
    println!("\nstats: {}", serde_json::to_string_pretty(&dataset_stats(&from_yolo)).unwrap());
    println!("wrote {} and {}", show(&coco_path), show(&yolo_dir));
    Ok(())
}

fn show(p: &Path) -> String {
    p.display().to_string()
}
