//! Score a handful of detections against ground truth and print the
//! per-class table.
//!
//!     cargo run --example metrics

use jddl::annotations::ClassMap;
use jddl::bbox::BBox2D;
use jddl::metrics::{evaluate_with_classes, DetectionRecord, GroundTruthRecord};

fn gt(image: &str, class_id: u32, b: [f64; 4]) -> GroundTruthRecord {
    GroundTruthRecord { image_id: image.into(), class_id, bbox: BBox2D::new(b[0], b[1], b[2], b[3]).unwrap() }
}

fn det(image: &str, class_id: u32, b: [f64; 4], confidence: f64) -> DetectionRecord {
    DetectionRecord { image_id: image.into(), class_id, bbox: BBox2D::new(b[0], b[1], b[2], b[3]).unwrap(), confidence }
}

fn main() -> jddl::error::Result<()> {
    let truth = vec![
        gt("wing_01", 0, [100.0, 100.0, 180.0, 130.0]),
        gt("wing_01", 1, [300.0, 220.0, 360.0, 280.0]),
        gt("nose_07", 0, [40.0, 60.0, 90.0, 75.0]),
        gt("nose_07", 2, [400.0, 400.0, 470.0, 460.0]),
    ];
    let detections = vec![
        det("wing_01", 0, [102.0, 98.0, 178.0, 133.0], 0.92),
        det("wing_01", 1, [290.0, 215.0, 355.0, 270.0], 0.81),
        det("wing_01", 0, [500.0, 10.0, 540.0, 40.0], 0.40),
        det("nose_07", 0, [45.0, 58.0, 95.0, 80.0], 0.66),
        det("nose_07", 2, [330.0, 330.0, 380.0, 370.0], 0.55),
    ];
    let classes = ClassMap::airsd();
    let report = evaluate_with_classes(&detections, &truth, 0.5, Some(3))?;
    print!("{}", report.to_markdown(classes.names()));
    Ok(())
}
