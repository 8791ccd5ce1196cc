//! Mapping 2D damage boxes onto 3D point clouds.
//!
//! Every cloud point is projected through `P = K [R | T]`; points behind the
//! camera are dropped, points whose pixel falls inside the (closed) box are
//! kept. Optionally a coarse z-buffer removes points hidden behind nearer
//! surface, since a box on the near side of a fuselage otherwise also
//! collects the far side.

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox2D;
use crate::error::{Error, Result};
use crate::geometry::{back_project, CameraRig, PixelDepth};
use crate::pointcloud::{PointCloud, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Return the cloud's own coordinates for selected points.
    #[default]
    OriginalPoints,
    /// Re-derive each selected point from `(u, v, Z)` by back-projection.
    Backprojected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationOptions {
    pub occlusion_culling: bool,
    /// Z-buffer bin size in pixels.
    pub zbuffer_cell: f64,
    /// Relative depth slack: visible iff `depth <= d_min * (1 + tol)`.
    pub depth_tolerance: f64,
    pub selection_mode: SelectionMode,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        Self {
            occlusion_culling: false,
            zbuffer_cell: 1.0,
            depth_tolerance: 0.01,
            selection_mode: SelectionMode::OriginalPoints,
        }
    }
}

impl LocalizationOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.zbuffer_cell > 0.0 && self.zbuffer_cell.is_finite()) {
            return Err(Error::invalid(
                "localization options",
                format!("zbuffer cell must be positive, got {}", self.zbuffer_cell),
            ));
        }
        if !(self.depth_tolerance >= 0.0 && self.depth_tolerance.is_finite()) {
            return Err(Error::invalid(
                "localization options",
                format!("depth tolerance must be >= 0, got {}", self.depth_tolerance),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb3 {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb3 {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut aabb = Aabb3 {
            min: (*first).into(),
            max: (*first).into(),
        };
        for p in it {
            for k in 0..3 {
                aabb.min[k] = aabb.min[k].min(p[k]);
                aabb.max[k] = aabb.max[k].max(p[k]);
            }
        }
        Some(aabb)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    pub class_id: u32,
    /// Ascending cloud indices.
    pub indices: Vec<usize>,
    pub points: Vec<Vector3<f64>>,
    pub centroid: Option<Vector3<f64>>,
    pub aabb: Option<Aabb3>,
}

impl LocalizationResult {
    fn from_selection(class_id: u32, indices: Vec<usize>, points: Vec<Vector3<f64>>) -> Self {
        let centroid = (!points.is_empty())
            .then(|| points.iter().sum::<Vector3<f64>>() / points.len() as f64);
        let aabb = Aabb3::from_points(&points);
        Self {
            class_id,
            indices,
            points,
            centroid,
            aabb,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// One entry of the localization report JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub detection_id: usize,
    pub class_id: u32,
    pub n_points: usize,
    pub centroid: Option<[f64; 3]>,
    pub aabb: Option<[f64; 6]>,
    pub indices: Vec<usize>,
}

impl ReportEntry {
    pub fn new(detection_id: usize, result: &LocalizationResult) -> Self {
        Self {
            detection_id,
            class_id: result.class_id,
            n_points: result.indices.len(),
            centroid: result.centroid.map(Into::into),
            aabb: result.aabb.map(|a| {
                [a.min[0], a.min[1], a.min[2], a.max[0], a.max[1], a.max[2]]
            }),
            indices: result.indices.clone(),
        }
    }
}

/// Bins points by `floor(u / cell), floor(v / cell)` and marks a point
/// visible iff its depth is within `depth_tolerance` (relative) of the
/// nearest depth in its bin.
pub fn zbuffer_visibility(projected: &[PixelDepth], cell: f64, depth_tolerance: f64) -> Vec<bool> {
    assert!(cell > 0.0, "zbuffer cell must be positive");
    let key = |p: &PixelDepth| ((p.u / cell).floor() as i64, (p.v / cell).floor() as i64);
    let mut nearest: HashMap<(i64, i64), f64> = HashMap::with_capacity(projected.len() / 2);
    for p in projected {
        nearest
            .entry(key(p))
            .and_modify(|d| *d = d.min(p.depth))
            .or_insert(p.depth);
    }
    projected
        .iter()
        .map(|p| p.depth <= nearest[&key(p)] * (1.0 + depth_tolerance))
        .collect()
}

/// Projection of a whole cloud through one camera, reusable across boxes.
#[derive(Debug, Clone)]
pub struct ProjectedCloud {
    /// `(cloud index, pixel)` for every point strictly in front of the camera.
    in_front: Vec<(usize, PixelDepth)>,
    /// Z-buffer visibility of `in_front`, if culling was requested.
    visible: Option<Vec<bool>>,
}

impl ProjectedCloud {
    pub fn new(rig: &CameraRig, cloud: &PointCloud, options: &LocalizationOptions) -> Result<Self> {
        options.validate()?;
        let projection = rig.projection();
        let in_front: Vec<(usize, PixelDepth)> = cloud
            .points()
            .par_iter()
            .enumerate()
            .filter_map(|(i, x)| {
                let [a, b, w] = projection.apply([x.x, x.y, x.z]);
                // w == 0 is the principal plane; it is never "in front".
                (w > 0.0).then(|| (i, PixelDepth::new(a / w, b / w, w)))
            })
            .collect();
        let visible = options.occlusion_culling.then(|| {
            let pixels: Vec<PixelDepth> = in_front.iter().map(|(_, p)| *p).collect();
            zbuffer_visibility(&pixels, options.zbuffer_cell, options.depth_tolerance)
        });
        Ok(Self { in_front, visible })
    }

    pub fn in_front(&self) -> &[(usize, PixelDepth)] {
        &self.in_front
    }

    /// Iterates `(cloud index, pixel)` of the points that survive culling.
    pub fn candidates(&self) -> impl Iterator<Item = &(usize, PixelDepth)> {
        self.in_front
            .iter()
            .enumerate()
            .filter(|(k, _)| self.visible.as_ref().is_none_or(|v| v[*k]))
            .map(|(_, e)| e)
    }

    pub fn select(
        &self,
        bbox: &BBox2D,
        class_id: u32,
        rig: &CameraRig,
        cloud: &PointCloud,
        mode: SelectionMode,
    ) -> LocalizationResult {
        let chosen: Vec<(usize, PixelDepth)> = self
            .candidates()
            .filter(|(_, p)| bbox.contains(p.u, p.v))
            .copied()
            .collect();
        let indices: Vec<usize> = chosen.iter().map(|(i, _)| *i).collect();
        let points = match mode {
            SelectionMode::OriginalPoints => indices.iter().map(|&i| cloud.points()[i]).collect(),
            SelectionMode::Backprojected => chosen
                .iter()
                .map(|(_, p)| {
                    back_project(&rig.intrinsics, &rig.pose, p)
                        .expect("selected points have positive depth")
                })
                .collect(),
        };
        LocalizationResult::from_selection(class_id, indices, points)
    }
}

/// Selects the cloud points belonging to the damage seen in `bbox`.
pub fn localize_damage(
    bbox: &BBox2D,
    class_id: u32,
    rig: &CameraRig,
    cloud: &PointCloud,
    options: &LocalizationOptions,
) -> Result<LocalizationResult> {
    let projected = ProjectedCloud::new(rig, cloud, options)?;
    Ok(projected.select(bbox, class_id, rig, cloud, options.selection_mode))
}

/// Same as [`localize_damage`] for several boxes seen by one camera, with a
/// single projection pass.
pub fn localize_detections(
    boxes: &[(BBox2D, u32)],
    rig: &CameraRig,
    cloud: &PointCloud,
    options: &LocalizationOptions,
) -> Result<Vec<LocalizationResult>> {
    let projected = ProjectedCloud::new(rig, cloud, options)?;
    Ok(boxes
        .iter()
        .map(|(b, c)| projected.select(b, *c, rig, cloud, options.selection_mode))
        .collect())
}

pub const UNDAMAGED_COLOR: Rgb = [128, 128, 128];

const CLASS_PALETTE: [Rgb; 11] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
];

pub fn class_color(class_id: u32) -> Rgb {
    CLASS_PALETTE[class_id as usize % CLASS_PALETTE.len()]
}

/// Per-point colors: damaged points by class (later results win), others gray.
pub fn color_cloud(n_points: usize, results: &[LocalizationResult]) -> Vec<Rgb> {
    let mut colors = vec![UNDAMAGED_COLOR; n_points];
    for r in results {
        let c = class_color(r.class_id);
        for &i in &r.indices {
            colors[i] = c;
        }
    }
    colors
}
