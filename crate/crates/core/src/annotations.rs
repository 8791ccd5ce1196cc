//! Damage annotations in YOLO and COCO layouts.
//!
//! Images are identified by file stem in both formats, so a YOLO label
//! `img_001.txt`, a COCO image `img_001.jpg` and a detection with
//! `image_id = "img_001"` all refer to the same picture. YOLO carries no
//! image size; it comes from a sidecar CSV index (`file,width,height`) or
//! defaults to 640×640.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bbox::BBox2D;
use crate::error::{Error, Result};
use crate::metrics::GroundTruthRecord;

/// The eleven damage classes, in dataset order.
pub const AIRSD_CLASSES: [&str; 11] = [
    "crack",
    "dent",
    "rust",
    "paint peeling",
    "scratch",
    "rivet damage",
    "lightning strike",
    "bird strike",
    "hail damage",
    "wrinkle",
    "missing fastener",
];

pub const DEFAULT_IMAGE_SIZE: u32 = 640;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap(Vec<String>);

impl ClassMap {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::invalid("class map", "no classes"));
        }
        Ok(Self(names))
    }

    pub fn airsd() -> Self {
        Self(AIRSD_CLASSES.iter().map(|s| s.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn name(&self, class_id: u32) -> Option<&str> {
        self.0.get(class_id as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn index_of(&self, name: &str) -> Option<u32> {
        self.0.iter().position(|n| n == name).map(|i| i as u32)
    }

    /// One name per line, the `classes.txt` convention of YOLO datasets.
    pub fn parse_names(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    }
}

impl Default for ClassMap {
    fn default() -> Self {
        Self::airsd()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub image_id: String,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

impl ImageInfo {
    pub fn new(file_name: &str, width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(
                "image",
                format!("{file_name}: zero image dimension {width}x{height}"),
            ));
        }
        Ok(Self {
            image_id: file_stem(file_name),
            file_name: file_name.to_string(),
            width,
            height,
        })
    }
}

fn file_stem(name: &str) -> String {
    Path::new(name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| name.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    images: Vec<ImageInfo>,
    annotations: Vec<GroundTruthRecord>,
    class_map: ClassMap,
}

impl AnnotationSet {
    /// Validates ids and boxes and puts images in file-name order, with
    /// annotations grouped by image (original order kept within an image).
    pub fn new(
        mut images: Vec<ImageInfo>,
        mut annotations: Vec<GroundTruthRecord>,
        class_map: ClassMap,
    ) -> Result<Self> {
        images.sort_by(|a, b| a.file_name.cmp(&b.file_name));
        let mut position = HashMap::new();
        for (i, img) in images.iter().enumerate() {
            if position.insert(img.image_id.clone(), i).is_some() {
                return Err(Error::invalid(
                    "annotation set",
                    format!("two images share the id '{}'", img.image_id),
                ));
            }
        }
        for a in &annotations {
            let Some(&i) = position.get(&a.image_id) else {
                return Err(Error::invalid(
                    "annotation set",
                    format!("annotation references unknown image '{}'", a.image_id),
                ));
            };
            if a.class_id as usize >= class_map.len() {
                return Err(Error::invalid(
                    "annotation set",
                    format!(
                        "class id {} out of range for {} classes (image '{}')",
                        a.class_id,
                        class_map.len(),
                        a.image_id
                    ),
                ));
            }
            let img = &images[i];
            let b = &a.bbox;
            if b.x_min() < 0.0 || b.y_min() < 0.0 || b.x_max() > img.width as f64 || b.y_max() > img.height as f64 {
                return Err(Error::invalid(
                    "annotation set",
                    format!("box {:?} exceeds image '{}' bounds", b.to_array(), img.image_id),
                ));
            }
        }
        annotations.sort_by_key(|a| position[&a.image_id]);
        Ok(Self {
            images,
            annotations,
            class_map,
        })
    }

    pub fn images(&self) -> &[ImageInfo] {
        &self.images
    }

    pub fn annotations(&self) -> &[GroundTruthRecord] {
        &self.annotations
    }

    pub fn class_map(&self) -> &ClassMap {
        &self.class_map
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.image_id == image_id)
    }
}

/// Clamps a pixel box to the image. Boxes with no area left inside the
/// image are rejected.
fn clamp_box(x0: f64, y0: f64, x1: f64, y1: f64, img: &ImageInfo) -> std::result::Result<BBox2D, String> {
    let (w, h) = (img.width as f64, img.height as f64);
    let c = BBox2D::new(x0.clamp(0.0, w), y0.clamp(0.0, h), x1.clamp(0.0, w), y1.clamp(0.0, h));
    c.map_err(|_| format!("box ({x0}, {y0}, {x1}, {y1}) lies outside the {w}x{h} image"))
}

/// Reads a `file,width,height` sidecar index.
pub fn read_image_index(path: &Path) -> Result<Vec<ImageInfo>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_image_index(&text, path)
}

pub fn parse_image_index(text: &str, path: &Path) -> Result<Vec<ImageInfo>> {
    #[derive(Deserialize)]
    struct Row {
        file: String,
        width: u32,
        height: u32,
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
        out.push(ImageInfo::new(&row.file, row.width, row.height).map_err(|e| Error::parse(path, i + 2, e.to_string()))?);
    }
    Ok(out)
}

pub fn write_image_index(images: &[ImageInfo]) -> String {
    let mut out = String::from("file,width,height\n");
    for img in images {
        let _ = writeln!(out, "{},{},{}", img.file_name, img.width, img.height);
    }
    out
}

/// Parses YOLO label text (`class x_c y_c w h` per line, normalized) for one image.
pub fn parse_yolo_labels(
    text: &str,
    path: &Path,
    image: &ImageInfo,
    class_map: &ClassMap,
) -> Result<Vec<GroundTruthRecord>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 5 fields 'class x_center y_center width height', got {}", fields.len()),
            ));
        }
        let class_id: u32 = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("class '{}' is not a non-negative integer", fields[0])))?;
        if class_id as usize >= class_map.len() {
            return Err(Error::parse(
                path,
                line_no,
                format!("class {class_id} out of range for {} classes", class_map.len()),
            ));
        }
        let mut v = [0.0f64; 4];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("non-numeric value '{f}'")))?;
            if !(0.0..=1.0).contains(slot) {
                return Err(Error::parse(path, line_no, format!("normalized value {f} outside [0, 1]")));
            }
        }
        let [xc, yc, w, h] = v;
        if w == 0.0 || h == 0.0 {
            return Err(Error::parse(path, line_no, "zero-size box"));
        }
        let (iw, ih) = (image.width as f64, image.height as f64);
        let bbox = clamp_box((xc - w / 2.0) * iw, (yc - h / 2.0) * ih, (xc + w / 2.0) * iw, (yc + h / 2.0) * ih, image)
            .map_err(|reason| Error::parse(path, line_no, reason))?;
        out.push(GroundTruthRecord {
            image_id: image.image_id.clone(),
            class_id,
            bbox,
        });
    }
    Ok(out)
}

/// Reads every `*.txt` label in `label_dir` (except `classes.txt`). With an
/// index, images listed there but lacking a label file are kept with no
/// annotations and a label without an index entry is an error; without
/// one, every label is taken to be a 640×640 `<stem>.jpg`.
pub fn parse_yolo(label_dir: &Path, index: Option<&Path>, class_map: ClassMap) -> Result<AnnotationSet> {
    let mut label_files: Vec<PathBuf> = std::fs::read_dir(label_dir)
        .map_err(|e| Error::io(label_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .filter(|p| p.file_name().is_some_and(|n| n != "classes.txt"))
        .collect();
    label_files.sort();

    let mut images = match index {
        Some(p) => read_image_index(p)?,
        None => Vec::new(),
    };
    let mut annotations = Vec::new();
    for path in &label_files {
        let stem = file_stem(&path.file_name().unwrap().to_string_lossy());
        let image = match images.iter().find(|i| i.image_id == stem) {
            Some(img) => img.clone(),
            None if index.is_none() => {
                let img = ImageInfo::new(&format!("{stem}.jpg"), DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE)?;
                images.push(img.clone());
                img
            }
            None => {
                return Err(Error::parse(path, 0, format!("no entry for '{stem}' in the image index")));
            }
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        annotations.extend(parse_yolo_labels(&text, path, &image, &class_map)?);
    }
    AnnotationSet::new(images, annotations, class_map)
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    #[serde(default)]
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default)]
    area: f64,
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

pub fn parse_coco(path: &Path) -> Result<AnnotationSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_coco_str(&text, path)
}

/// Category ids may start at 0 or 1; they are remapped to contiguous
/// 0-based class ids in ascending id order.
pub fn parse_coco_str(text: &str, path: &Path) -> Result<AnnotationSet> {
    let file: CocoFile = serde_json::from_str(text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let mut categories: Vec<&CocoCategory> = file.categories.iter().collect();
    categories.sort_by_key(|c| c.id);
    let class_of: HashMap<u64, u32> = categories.iter().enumerate().map(|(i, c)| (c.id, i as u32)).collect();
    if class_of.len() != categories.len() {
        return Err(Error::parse(path, 0, "duplicate category id"));
    }
    let class_map = ClassMap::new(categories.iter().map(|c| c.name.clone()).collect())
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;

    let mut images = Vec::with_capacity(file.images.len());
    let mut by_id = HashMap::new();
    for img in &file.images {
        let info = ImageInfo::new(&img.file_name, img.width, img.height).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        if by_id.insert(img.id, info.clone()).is_some() {
            return Err(Error::parse(path, 0, format!("duplicate image id {}", img.id)));
        }
        images.push(info);
    }
    let mut annotations = Vec::with_capacity(file.annotations.len());
    for a in &file.annotations {
        let image = by_id.get(&a.image_id).ok_or_else(|| {
            Error::parse(path, 0, format!("annotation {} references missing image id {}", a.id, a.image_id))
        })?;
        let class_id = *class_of.get(&a.category_id).ok_or_else(|| {
            Error::parse(path, 0, format!("annotation {} references missing category id {}", a.id, a.category_id))
        })?;
        let [x, y, w, h] = a.bbox;
        let bbox = clamp_box(x, y, x + w, y + h, image)
            .map_err(|reason| Error::parse(path, 0, format!("annotation {}: {reason}", a.id)))?;
        annotations.push(GroundTruthRecord {
            image_id: image.image_id.clone(),
            class_id,
            bbox,
        });
    }
    AnnotationSet::new(images, annotations, class_map).map_err(|e| Error::parse(path, 0, e.to_string()))
}

/// COCO JSON with 1-based image, category and annotation ids.
pub fn write_coco(set: &AnnotationSet) -> String {
    let image_ids: HashMap<&str, u64> = set
        .images
        .iter()
        .enumerate()
        .map(|(i, img)| (img.image_id.as_str(), i as u64 + 1))
        .collect();
    let file = CocoFile {
        images: set
            .images
            .iter()
            .map(|img| CocoImage {
                id: image_ids[img.image_id.as_str()],
                file_name: img.file_name.clone(),
                width: img.width,
                height: img.height,
            })
            .collect(),
        annotations: set
            .annotations
            .iter()
            .enumerate()
            .map(|(i, a)| CocoAnnotation {
                id: i as u64 + 1,
                image_id: image_ids[a.image_id.as_str()],
                category_id: a.class_id as u64 + 1,
                bbox: [a.bbox.x_min(), a.bbox.y_min(), a.bbox.width(), a.bbox.height()],
                area: a.bbox.area(),
                iscrowd: 0,
            })
            .collect(),
        categories: set
            .class_map
            .names()
            .iter()
            .enumerate()
            .map(|(i, n)| CocoCategory {
                id: i as u64 + 1,
                name: n.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("COCO file serializes") + "\n"
}

/// YOLO dataset files: one label text per image (keyed by `<stem>.txt`),
/// the sidecar image index and `classes.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct YoloOutput {
    pub labels: BTreeMap<String, String>,
    pub index_csv: String,
    pub classes: String,
}

impl YoloOutput {
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, content: &str| {
            let p = dir.join(name);
            std::fs::write(&p, content).map_err(|e| Error::io(p, e))
        };
        for (name, content) in &self.labels {
            write(name, content)?;
        }
        write("classes.txt", &self.classes)?;
        write("index.csv", &self.index_csv)
    }
}

pub fn write_yolo(set: &AnnotationSet) -> YoloOutput {
    let mut labels: BTreeMap<String, String> = set
        .images
        .iter()
        .map(|img| (format!("{}.txt", img.image_id), String::new()))
        .collect();
    for a in &set.annotations {
        let img = set.image(&a.image_id).expect("validated on construction");
        let (w, h) = (img.width as f64, img.height as f64);
        let b = &a.bbox;
        let line = format!(
            "{} {} {} {} {}\n",
            a.class_id,
            (b.x_min() + b.x_max()) / 2.0 / w,
            (b.y_min() + b.y_max()) / 2.0 / h,
            b.width() / w,
            b.height() / h
        );
        labels.get_mut(&format!("{}.txt", img.image_id)).unwrap().push_str(&line);
    }
    let mut classes = set.class_map.names().join("\n");
    classes.push('\n');
    YoloOutput {
        labels,
        index_csv: write_image_index(&set.images),
        classes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationFormat {
    Yolo,
    Coco,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Serialized {
    Yolo(YoloOutput),
    Coco(String),
}

pub fn convert(set: &AnnotationSet, target: AnnotationFormat) -> Serialized {
    match target {
        AnnotationFormat::Yolo => Serialized::Yolo(write_yolo(set)),
        AnnotationFormat::Coco => Serialized::Coco(write_coco(set)),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Summary {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let mut n = 0usize;
        let mut s = Summary {
            min: f64::INFINITY,
            mean: 0.0,
            max: f64::NEG_INFINITY,
        };
        for v in values {
            n += 1;
            s.min = s.min.min(v);
            s.max = s.max.max(v);
            s.mean += v;
        }
        if n == 0 {
            return Summary::default();
        }
        s.mean /= n as f64;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_images: usize,
    pub n_annotations: usize,
    /// `(class name, count)` for every class of the map, in class order.
    pub per_class: Vec<(String, usize)>,
    /// Number of boxes in an image -> number of images with that many.
    pub boxes_per_image: BTreeMap<usize, usize>,
    pub box_width: Summary,
    pub box_height: Summary,
    pub box_area: Summary,
}

pub fn dataset_stats(set: &AnnotationSet) -> DatasetStats {
    let mut per_class: Vec<(String, usize)> = set.class_map.names().iter().map(|n| (n.clone(), 0)).collect();
    let mut per_image: HashMap<&str, usize> = set.images.iter().map(|i| (i.image_id.as_str(), 0)).collect();
    for a in &set.annotations {
        per_class[a.class_id as usize].1 += 1;
        *per_image.get_mut(a.image_id.as_str()).unwrap() += 1;
    }
    let mut boxes_per_image = BTreeMap::new();
    for n in per_image.values() {
        *boxes_per_image.entry(*n).or_insert(0) += 1;
    }
    let boxes = || set.annotations.iter().map(|a| a.bbox);
    DatasetStats {
        n_images: set.images.len(),
        n_annotations: set.annotations.len(),
        per_class,
        boxes_per_image,
        box_width: Summary::of(boxes().map(|b| b.width())),
        box_height: Summary::of(boxes().map(|b| b.height())),
        box_area: Summary::of(boxes().map(|b| b.area())),
    }
}
