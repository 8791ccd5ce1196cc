//! Pinhole camera model.
//!
//! World to camera is `x_cam = R * x_world + T`, camera axes are x right,
//! y down, z forward. Intrinsics carry no skew and no lens distortion. 3D
//! quantities are in meters, image quantities in pixels, and depth is the
//! camera-frame Z coordinate (not the ray length).

use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the orthonormality and determinant checks on rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::invalid(
                "intrinsics",
                format!("focal lengths must be positive and finite (fx={fx}, fy={fy})"),
            ));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::invalid("intrinsics", "principal point must be finite"));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }

    pub fn fy(&self) -> f64 {
        self.fy
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    /// The 3x3 calibration matrix `K`.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

/// Rigid world-to-camera transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraPose {
    /// Validates `RᵀR = I` and `det R = 1` entrywise within [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("camera pose", "non-finite entry"));
        }
        let gram = rotation.transpose() * rotation;
        let identity = Matrix3::<f64>::identity();
        for i in 0..3 {
            for j in 0..3 {
                let dev = (gram[(i, j)] - identity[(i, j)]).abs();
                if dev > ROTATION_TOLERANCE {
                    return Err(Error::invalid(
                        "camera pose",
                        format!(
                            "rotation is not orthonormal: (RᵀR)[{i},{j}] deviates from identity by {dev:e}"
                        ),
                    ));
                }
            }
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::invalid(
                "camera pose",
                format!("rotation determinant is {det}, expected 1"),
            ));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates, `-Rᵀ T`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn world_to_camera(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    pub fn camera_to_world(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (x - self.translation)
    }
}

/// `P = K [R | T]`. Only obtainable through [`build_projection`] or by
/// scaling an existing matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix(Matrix3x4<f64>);

impl ProjectionMatrix {
    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.0
    }

    /// `s * P`, the same projective map with depths scaled by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if s == 0.0 || !s.is_finite() {
            return Err(Error::invalid("projection scale", format!("got {s}")));
        }
        Ok(Self(self.0 * s))
    }

    /// Homogeneous image coordinates `(a, b, w)` of a world point.
    #[inline]
    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        let p = &self.0;
        let row = |r: usize| p[(r, 0)] * x[0] + p[(r, 1)] * x[1] + p[(r, 2)] * x[2] + p[(r, 3)];
        [row(0), row(1), row(2)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelDepth {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl PixelDepth {
    pub fn new(u: f64, v: f64, depth: f64) -> Self {
        Self { u, v, depth }
    }

    /// False for points behind (or on) the camera plane.
    pub fn in_front(&self) -> bool {
        self.depth > 0.0
    }
}

pub fn build_projection(intrinsics: &CameraIntrinsics, pose: &CameraPose) -> ProjectionMatrix {
    let mut rt = Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&pose.rotation);
    rt.set_column(3, &pose.translation);
    ProjectionMatrix(intrinsics.matrix() * rt)
}

/// Projects a world point; the result may lie behind the camera, check
/// [`PixelDepth::in_front`].
pub fn project_point(projection: &ProjectionMatrix, x: &Vector3<f64>) -> Result<PixelDepth> {
    let homogeneous = projection.0 * Vector4::new(x.x, x.y, x.z, 1.0);
    let w = homogeneous.z;
    if w == 0.0 {
        return Err(Error::SingularProjection);
    }
    Ok(PixelDepth::new(homogeneous.x / w, homogeneous.y / w, w))
}

/// Inverts the pinhole map at known depth: `X_cam = K⁻¹ (uZ, vZ, Z)`,
/// `X_world = Rᵀ (X_cam - T)`.
pub fn back_project(
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    pixel: &PixelDepth,
) -> Result<Vector3<f64>> {
    if !(pixel.depth > 0.0) {
        return Err(Error::invalid(
            "pixel depth",
            format!("back-projection needs a positive depth, got {}", pixel.depth),
        ));
    }
    let z = pixel.depth;
    let cam = Vector3::new(
        (pixel.u - intrinsics.cx) * z / intrinsics.fx,
        (pixel.v - intrinsics.cy) * z / intrinsics.fy,
        z,
    );
    Ok(pose.camera_to_world(&cam))
}

/// A calibrated camera: intrinsics plus pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

#[derive(Debug, Serialize, Deserialize)]
struct CameraRigFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(rename = "R")]
    rotation: [f64; 9],
    #[serde(rename = "T")]
    translation: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    convention: Option<String>,
}

const CONVENTION: &str = "x_cam = R * x_world + T; R row-major; camera x right, y down, z forward";

impl CameraRig {
    pub fn new(intrinsics: CameraIntrinsics, pose: CameraPose) -> Self {
        Self { intrinsics, pose }
    }

    pub fn projection(&self) -> ProjectionMatrix {
        build_projection(&self.intrinsics, &self.pose)
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Self, String> {
        let file: CameraRigFile = serde_json::from_str(s).map_err(|e| e.to_string())?;
        let intrinsics =
            CameraIntrinsics::new(file.fx, file.fy, file.cx, file.cy).map_err(|e| e.to_string())?;
        let pose = CameraPose::new(
            Matrix3::from_row_slice(&file.rotation),
            Vector3::from(file.translation),
        )
        .map_err(|e| e.to_string())?;
        Ok(Self { intrinsics, pose })
    }

    pub fn to_json_string(&self) -> String {
        let r = &self.pose.rotation;
        let file = CameraRigFile {
            fx: self.intrinsics.fx,
            fy: self.intrinsics.fy,
            cx: self.intrinsics.cx,
            cy: self.intrinsics.cy,
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: self.pose.translation.into(),
            convention: Some(CONVENTION.to_string()),
        };
        serde_json::to_string_pretty(&file).expect("camera rig serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|reason| Error::parse(path, 0, reason))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n").map_err(|e| Error::io(path, e))
    }
}
