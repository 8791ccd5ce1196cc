//! Deterministic synthetic fuselage scenes.
//!
//! The fuselage is an open cylinder around the world z axis, `z ∈ [0, L]`.
//! Points sit on a regular (azimuth, z) lattice with per-point jitter drawn
//! from a counter-based generator keyed by `(seed, lattice index)`, so the
//! output does not depend on how generation is scheduled across threads.
//! Damage patches are geodesic discs on the surface; the per-point label is
//! 0 for clean surface and `k` for the k-th patch (1-based).

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::{AnnotationSet, ClassMap, ImageInfo};
use crate::bbox::BBox2D;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CameraPose, CameraRig};
use crate::localization::zbuffer_visibility;
use crate::metrics::GroundTruthRecord;
use crate::pointcloud::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuselageSpec {
    pub radius: f64,
    pub length: f64,
    /// Nominal lattice spacing along both surface directions.
    pub spacing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    /// Position along the fuselage axis (z).
    pub axial: f64,
    /// Radians, measured from +x toward +y.
    pub azimuth: f64,
    /// Geodesic radius on the surface.
    pub radius: f64,
    pub class_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub fuselage: FuselageSpec,
    pub patches: Vec<Patch>,
    pub seed: u64,
    /// Jitter amplitude as a fraction of one lattice cell.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    0.25
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let f = &self.fuselage;
        for (name, v) in [("radius", f.radius), ("length", f.length), ("spacing", f.spacing)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid("scene", format!("fuselage {name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::invalid("scene", format!("jitter must lie in [0, 1), got {}", self.jitter)));
        }
        for (i, p) in self.patches.iter().enumerate() {
            if !(p.radius > 0.0 && p.radius < f.radius) {
                return Err(Error::invalid(
                    "scene",
                    format!("patch {} radius {} must lie in (0, {})", i + 1, p.radius, f.radius),
                ));
            }
            if !(0.0..=f.length).contains(&p.axial) || !p.azimuth.is_finite() {
                return Err(Error::invalid("scene", format!("patch {} anchor is off the fuselage", i + 1)));
            }
        }
        Ok(())
    }

    /// Lattice size `(around, along)`: `⌈2πr/s⌉ × ⌈L/s⌉`.
    pub fn lattice(&self) -> (usize, usize) {
        let f = &self.fuselage;
        ((TAU * f.radius / f.spacing).ceil() as usize, (f.length / f.spacing).ceil() as usize)
    }
}

/// Angle difference wrapped to `(-π, π]`.
fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Distance along the surface between two points given as `(azimuth, z)`.
pub fn geodesic_distance(radius: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    (radius * wrap_angle(a.0 - b.0)).hypot(a.1 - b.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    /// Points with labels and outward normals.
    pub cloud: PointCloud,
}

impl Scene {
    pub fn labels(&self) -> &[u32] {
        self.cloud.labels().expect("scene clouds are labeled")
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        self.cloud.normals().expect("scene clouds carry normals")
    }

    /// Points of patch `label` (1-based).
    pub fn patch_points(&self, label: u32) -> impl Iterator<Item = usize> + '_ {
        self.labels().iter().enumerate().filter(move |(_, l)| **l == label).map(|(i, _)| i)
    }

    /// Surface points whose outward normal faces the camera. On a convex
    /// cylinder seen from outside, this is exactly the unoccluded set.
    pub fn facing(&self, rig: &CameraRig) -> Vec<bool> {
        let center = rig.pose.center();
        self.cloud
            .points()
            .par_iter()
            .zip(self.normals().par_iter())
            .map(|(p, n)| n.dot(&(center - p)) > 0.0)
            .collect()
    }
}

fn lattice_jitter(seed: u64, index: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let a = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let b = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    (a - 0.5, b - 0.5)
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let f = spec.fuselage;
    for (i, a) in spec.patches.iter().enumerate() {
        for (j, b) in spec.patches.iter().enumerate().skip(i + 1) {
            if geodesic_distance(f.radius, (a.azimuth, a.axial), (b.azimuth, b.axial)) < a.radius + b.radius {
                log::warn!("patches {} and {} overlap; patch {} wins shared points", i + 1, j + 1, j + 1);
            }
        }
    }
    let (n_around, n_along) = spec.lattice();
    let total = n_around * n_along;
    let samples: Vec<(Vector3<f64>, Vector3<f64>, u32)> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % n_around, idx / n_around);
            let (ja, jz) = lattice_jitter(spec.seed, idx as u64);
            let theta = TAU * (i as f64 + 0.5 + spec.jitter * ja) / n_around as f64;
            let z = f.length * (j as f64 + 0.5 + spec.jitter * jz) / n_along as f64;
            let (s, c) = theta.sin_cos();
            let label = spec
                .patches
                .iter()
                .enumerate()
                .filter(|(_, p)| geodesic_distance(f.radius, (theta, z), (p.azimuth, p.axial)) <= p.radius)
                .map(|(k, _)| k as u32 + 1)
                .next_back()
                .unwrap_or(0);
            (Vector3::new(f.radius * c, f.radius * s, z), Vector3::new(c, s, 0.0), label)
        })
        .collect();
    let mut points = Vec::with_capacity(total);
    let mut normals = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for (p, n, l) in samples {
        points.push(p);
        normals.push(n);
        labels.push(l);
    }
    let cloud = PointCloud::new(points).with_labels(labels)?.with_normals(normals)?;
    Ok(Scene { spec: spec.clone(), cloud })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRigSpec {
    /// Cameras per height.
    pub count: usize,
    /// Distance of each camera from the fuselage axis.
    pub ring_radius: f64,
    /// Camera z positions.
    pub heights: Vec<f64>,
    pub intrinsics: IntrinsicsSpec,
}

/// Camera at `(ρ cos θ, ρ sin θ, h)` looking horizontally at the axis point
/// `(0, 0, h)`, image rows running toward -z.
pub fn look_at_axis(azimuth: f64, ring_radius: f64, height: f64) -> Result<CameraPose> {
    let (s, c) = azimuth.sin_cos();
    let rotation = Matrix3::new(
        -s, c, 0.0, //
        0.0, 0.0, -1.0, //
        -c, -s, 0.0,
    );
    let center = Vector3::new(ring_radius * c, ring_radius * s, height);
    CameraPose::new(rotation, -(rotation * center))
}

pub fn generate_camera_ring(rig: &CameraRigSpec, fuselage: &FuselageSpec) -> Result<Vec<CameraRig>> {
    if rig.count == 0 || rig.heights.is_empty() {
        return Err(Error::invalid("camera rig", "need at least one camera and one height"));
    }
    if !(rig.ring_radius > fuselage.radius) {
        return Err(Error::invalid(
            "camera rig",
            format!("ring radius {} must exceed the fuselage radius {}", rig.ring_radius, fuselage.radius),
        ));
    }
    let k = rig.intrinsics;
    let intrinsics = CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy)?;
    let mut out = Vec::with_capacity(rig.count * rig.heights.len());
    for &h in &rig.heights {
        for i in 0..rig.count {
            let azimuth = TAU * i as f64 / rig.count as f64;
            out.push(CameraRig::new(intrinsics, look_at_axis(azimuth, rig.ring_radius, h)?));
        }
    }
    Ok(out)
}

/// Z-buffer parameters used when deciding which patch points a camera sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visibility {
    pub cell: f64,
    pub depth_tolerance: f64,
}

/// Z-buffer visibility of every cloud point (false behind the camera).
pub fn visible_points(cloud: &PointCloud, rig: &CameraRig, vis: Visibility) -> (Vec<bool>, Vec<crate::geometry::PixelDepth>) {
    let projection = rig.projection();
    let pixels: Vec<crate::geometry::PixelDepth> = cloud
        .points()
        .par_iter()
        .map(|x| {
            let [a, b, w] = projection.apply([x.x, x.y, x.z]);
            crate::geometry::PixelDepth::new(a / w, b / w, w)
        })
        .collect();
    let front: Vec<usize> = (0..pixels.len()).filter(|&i| pixels[i].depth > 0.0).collect();
    let front_px: Vec<_> = front.iter().map(|&i| pixels[i]).collect();
    let mask = zbuffer_visibility(&front_px, vis.cell, vis.depth_tolerance);
    let mut visible = vec![false; pixels.len()];
    for (k, &i) in front.iter().enumerate() {
        visible[i] = mask[k];
    }
    (visible, pixels)
}

/// Tight pixel bounds of patch `label`'s visible points, `None` if none is
/// visible. A single-pixel-wide extent is widened by half a pixel each way.
pub fn ground_truth_bbox(scene: &Scene, label: u32, rig: &CameraRig, vis: Visibility) -> Option<BBox2D> {
    let (visible, pixels) = visible_points(&scene.cloud, rig, vis);
    bbox_of(scene.patch_points(label).filter(|&i| visible[i]).map(|i| (pixels[i].u, pixels[i].v)))
}

pub(crate) fn bbox_of(pixels: impl Iterator<Item = (f64, f64)>) -> Option<BBox2D> {
    let mut b: Option<[f64; 4]> = None;
    for (u, v) in pixels {
        let e = b.get_or_insert([u, v, u, v]);
        e[0] = e[0].min(u);
        e[1] = e[1].min(v);
        e[2] = e[2].max(u);
        e[3] = e[3].max(v);
    }
    let [mut x0, mut y0, mut x1, mut y1] = b?;
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    BBox2D::new(x0, y0, x1, y1).ok()
}

/// Image name used for camera `i` in exported ground truth.
pub fn camera_image_name(i: usize) -> String {
    format!("cam{i}.png")
}

/// Ground-truth boxes of every visible patch in every camera, as an
/// annotation set over the AIRSD classes. Images are `2·cx × 2·cy`; boxes
/// are clipped to the image and dropped when nothing is left.
pub fn ground_truth_annotations(scene: &Scene, cameras: &[CameraRig], vis: Visibility) -> Result<AnnotationSet> {
    let mut images = Vec::with_capacity(cameras.len());
    let mut records = Vec::new();
    for (i, cam) in cameras.iter().enumerate() {
        let width = (2.0 * cam.intrinsics.cx()).round().max(1.0) as u32;
        let height = (2.0 * cam.intrinsics.cy()).round().max(1.0) as u32;
        let image = ImageInfo::new(&camera_image_name(i), width, height)?;
        let (visible, pixels) = visible_points(&scene.cloud, cam, vis);
        for (k, patch) in scene.spec.patches.iter().enumerate() {
            let label = k as u32 + 1;
            let Some(b) = bbox_of(scene.patch_points(label).filter(|&i| visible[i]).map(|i| (pixels[i].u, pixels[i].v)))
            else {
                continue;
            };
            let clipped = BBox2D::new(
                b.x_min().max(0.0),
                b.y_min().max(0.0),
                b.x_max().min(width as f64),
                b.y_max().min(height as f64),
            );
            if let Ok(bbox) = clipped {
                records.push(GroundTruthRecord {
                    image_id: image.image_id.clone(),
                    class_id: patch.class_id,
                    bbox,
                });
            }
        }
        images.push(image);
    }
    AnnotationSet::new(images, records, ClassMap::airsd())
}

/// A reproducible validation scene: 2 m × 12 m fuselage at 4 cm spacing
/// (~9.5·10⁴ points) with 4–6 separated patches.
pub fn random_scene_spec(seed: u64) -> SceneSpec {
    let fuselage = FuselageSpec {
        radius: 2.0,
        length: 12.0,
        spacing: 0.04,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
    let n = rng.random_range(4..=6);
    let mut patches: Vec<Patch> = Vec::with_capacity(n);
    let mut attempts = 0;
    while patches.len() < n && attempts < 10_000 {
        attempts += 1;
        let radius = rng.random_range(0.2..0.5);
        let candidate = Patch {
            axial: rng.random_range(radius + 0.5..fuselage.length - radius - 0.5),
            azimuth: rng.random_range(0.0..TAU),
            radius,
            class_id: rng.random_range(0..11),
        };
        // Keep patches far enough apart that one patch's box never reaches another.
        let clear = patches.iter().all(|p| {
            geodesic_distance(fuselage.radius, (p.azimuth, p.axial), (candidate.azimuth, candidate.axial))
                >= std::f64::consts::SQRT_2 * (p.radius + candidate.radius) + 0.2
        });
        if clear {
            patches.push(candidate);
        }
    }
    SceneSpec {
        fuselage,
        patches,
        seed,
        jitter: default_jitter(),
    }
}

/// Four cameras at mid-length, 7 m from the axis, 640×640 images.
pub fn default_rig_spec(fuselage: &FuselageSpec) -> CameraRigSpec {
    CameraRigSpec {
        count: 4,
        ring_radius: fuselage.radius + 5.0,
        heights: vec![fuselage.length / 2.0],
        intrinsics: IntrinsicsSpec {
            fx: 400.0,
            fy: 400.0,
            cx: 320.0,
            cy: 320.0,
        },
    }
}
