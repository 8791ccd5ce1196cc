//! Per-layer parameter counts of the YOLOv8n and AIR-YOLO backbones, plus the
//! output shapes of each layer for a 640×640 input.
//!
//!     cargo run --example params

use jddl::arch::{backbone_summary, comparison_markdown, shape_propagate, BackboneSpec, TensorShape};

fn main() -> jddl::error::Result<()> {
    let base = BackboneSpec::builtin("yolov8n")?;
    let light = BackboneSpec::builtin("air-yolo")?;
    print!("{}", comparison_markdown("YOLOv8n", &backbone_summary(&base), "AIR-YOLO", &backbone_summary(&light)));

    println!("\nfeature maps for a 640x640x3 input:");
    let shapes = shape_propagate(TensorShape { h: 640, w: 640, c: 3 }, &light)?;
    for (layer, s) in light.layers().iter().zip(shapes) {
        println!("  {:<26} -> {}x{}x{}", layer.to_string(), s.h, s.w, s.c);
    }
    Ok(())
}
