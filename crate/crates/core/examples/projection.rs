//! Project a few world points through a camera and lift them back with
//! their depths.
//!
//!     cargo run --example projection

use nalgebra::{Rotation3, Vector3};

use jddl::geometry::{back_project, build_projection, project_point, CameraIntrinsics, CameraPose, CameraRig};

fn main() -> jddl::error::Result<()> {
    let intrinsics = CameraIntrinsics::new(800.0, 800.0, 320.0, 320.0)?;
    // Camera 5 m back from the origin, turned 10° about the vertical axis.
    let rotation = Rotation3::from_axis_angle(&Vector3::y_axis(), 10f64.to_radians()).into_inner();
    let pose = CameraPose::new(rotation, Vector3::new(0.0, 0.0, 5.0))?;
    let projection = build_projection(&intrinsics, &pose);

    println!("P = K[R|T] ={}", projection.matrix());
    for x in [Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.5, -0.2, 1.0), Vector3::new(-1.0, 0.3, -2.0)] {
        let px = project_point(&projection, &x)?;
        let back = back_project(&intrinsics, &pose, &px)?;
        println!(
            "X = ({:+.2}, {:+.2}, {:+.2}) -> (u, v) = ({:7.2}, {:7.2}), depth {:.3} -> error {:.1e}",
            x.x,
            x.y,
            x.z,
            px.u,
            px.v,
            px.depth,
            (back - x).norm()
        );
    }

    let rig = CameraRig::new(intrinsics, pose);
    println!("\ncamera file:\n{}", rig.to_json_string());
    Ok(())
}
