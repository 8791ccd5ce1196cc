//! Point clouds and their ASCII file formats (PLY and plain XYZ).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    labels: Option<Vec<u32>>,
    normals: Option<Vec<Vector3<f64>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            labels: None,
            normals: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::invalid(
                "point cloud",
                format!(
                    "{} labels for {} points",
                    labels.len(),
                    self.points.len()
                ),
            ));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_normals(mut self, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::invalid(
                "point cloud",
                format!(
                    "{} normals for {} points",
                    normals.len(),
                    self.points.len()
                ),
            ));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    /// Reads `.ply` as ASCII PLY and anything else as whitespace-separated XYZ.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_ply = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("ply"))
            || text.starts_with("ply");
        if is_ply {
            parse_ply(&text, path)
        } else {
            parse_xyz(&text, path)
        }
    }
}

/// Per-vertex RGB color.
pub type Rgb = [u8; 3];

/// Serializes a cloud as ASCII PLY. `x y z` always; `nx ny nz` and an
/// integer `label` when present on the cloud; `red green blue` when `colors`
/// is given.
pub fn write_ply(cloud: &PointCloud, colors: Option<&[Rgb]>) -> Result<String> {
    if let Some(c) = colors {
        if c.len() != cloud.len() {
            return Err(Error::invalid(
                "point colors",
                format!("{} colors for {} points", c.len(), cloud.len()),
            ));
        }
    }
    let mut out = String::with_capacity(cloud.len() * 48 + 256);
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str("comment frame: world, meters\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals.is_some() {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if cloud.labels.is_some() {
        out.push_str("property int label\n");
    }
    if colors.is_some() {
        out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(n) = &cloud.normals {
            let n = n[i];
            let _ = write!(out, " {} {} {}", n.x, n.y, n.z);
        }
        if let Some(l) = &cloud.labels {
            let _ = write!(out, " {}", l[i]);
        }
        if let Some(c) = colors {
            let [r, g, b] = c[i];
            let _ = write!(out, " {r} {g} {b}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(Error::parse(path, 1, "missing 'ply' magic")),
    }

    // (element name, count, property names)
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    let mut header_done = false;
    for (no, line) in lines.by_ref() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(Error::parse(
                    path,
                    no + 1,
                    format!("unsupported PLY format '{other}', only ascii is read"),
                ))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(path, no + 1, format!("bad element count '{count}'")))?;
                elements.push((name.to_string(), count, Vec::new()));
            }
            ["property", "list", ..] => {
                let Some(el) = elements.last_mut() else {
                    return Err(Error::parse(path, no + 1, "property before element"));
                };
                el.2.push("<list>".into());
            }
            ["property", _ty, name] => {
                let Some(el) = elements.last_mut() else {
                    return Err(Error::parse(path, no + 1, "property before element"));
                };
                el.2.push(name.to_string());
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => return Err(Error::parse(path, no + 1, format!("unexpected header line '{line}'"))),
        }
    }
    if !header_done {
        return Err(Error::parse(path, 0, "missing end_header"));
    }

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut normals = Vec::new();
    let mut has_labels = false;
    let mut has_normals = false;
    for (name, count, props) in &elements {
        if name != "vertex" {
            // Skip other elements (faces etc.), one line per entry.
            for _ in 0..*count {
                lines.next();
            }
            continue;
        }
        let find = |n: &str| props.iter().position(|p| p == n);
        let (Some(ix), Some(iy), Some(iz)) = (find("x"), find("y"), find("z")) else {
            return Err(Error::parse(path, 0, "vertex element lacks x/y/z properties"));
        };
        let il = find("label");
        let inormal = match (find("nx"), find("ny"), find("nz")) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            _ => None,
        };
        has_labels = il.is_some();
        has_normals = inormal.is_some();
        points.reserve(*count);
        for _ in 0..*count {
            let Some((no, line)) = lines.next() else {
                return Err(Error::parse(path, 0, "fewer vertex lines than declared"));
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < props.len() {
                return Err(Error::parse(
                    path,
                    no + 1,
                    format!("expected {} fields, got {}", props.len(), fields.len()),
                ));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i]
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, no + 1, format!("non-numeric field '{}'", fields[i])))
            };
            points.push(Vector3::new(num(ix)?, num(iy)?, num(iz)?));
            if let Some(il) = il {
                let l: u32 = fields[il].parse().map_err(|_| {
                    Error::parse(path, no + 1, format!("label must be a non-negative integer, got '{}'", fields[il]))
                })?;
                labels.push(l);
            }
            if let Some([a, b, c]) = inormal {
                normals.push(Vector3::new(num(a)?, num(b)?, num(c)?));
            }
        }
    }

    let mut cloud = PointCloud::new(points);
    if has_labels {
        cloud = cloud.with_labels(labels)?;
    }
    if has_normals {
        cloud = cloud.with_normals(normals)?;
    }
    Ok(cloud)
}

pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(Error::parse(path, no + 1, "expected at least 3 fields (x y z)"));
        }
        let mut xyz = [0.0; 3];
        for (slot, f) in xyz.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|_| Error::parse(path, no + 1, format!("non-numeric field '{f}'")))?;
        }
        points.push(Vector3::from(xyz));
    }
    Ok(PointCloud::new(points))
}
