//! The `jddl` command line.
//!
//! Exit codes: 0 success, 2 invalid input, 3 internal invariant violation.
//! Every command that writes files also writes a `manifest.json` run record
//! next to them.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::annotations::{self, AnnotationFormat, AnnotationSet, ClassMap, Serialized};
use crate::arch::{backbone_summary, comparison_markdown, BackboneSpec};
use crate::bbox::BBox2D;
use crate::bench::{run_bench, to_csv, BenchConfig, IouBand};
use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::localization::{
    color_cloud, LocalizationOptions, LocalizationResult, ProjectedCloud, ReportEntry, SelectionMode,
};
use crate::losses::LossKind;
use crate::metrics::{evaluate_with_classes, DetectionRecord};
use crate::pointcloud::{write_ply, PointCloud};
use crate::simulator::{
    camera_image_name, default_rig_spec, generate_camera_ring, generate_scene, ground_truth_annotations,
    random_scene_spec, CameraRigSpec, SceneSpec, Visibility,
};

pub const EXIT_INVALID: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "jddl", version, about = "Damage localization, box losses, detection metrics and backbone accounting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lift 2D damage boxes onto a point cloud.
    Localize(LocalizeArgs),
    /// Score detections against ground-truth annotations.
    Eval(EvalArgs),
    /// Per-layer parameter counts of a backbone.
    Params(ParamsArgs),
    /// Seeded box-regression runs for every loss.
    LossBench(BenchArgs),
    /// Convert or summarize annotation sets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Generate a labeled fuselage scene, camera ring and ground truth.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    OriginalPoints,
    Backprojected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    Yolov8n,
    AirYolo,
}

impl Builtin {
    fn id(self) -> &'static str {
        match self {
            Builtin::Yolov8n => "yolov8n",
            Builtin::AirYolo => "air-yolo",
        }
    }
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// JSON list of `{image_id?, class_id, bbox: [x_min, y_min, x_max, y_max]}`.
    #[arg(long)]
    pub detections: PathBuf,
    /// Camera JSON used for every detection.
    #[arg(long, conflicts_with = "cameras_dir", required_unless_present = "cameras_dir")]
    pub camera: Option<PathBuf>,
    /// Directory of `<image_id>.json` cameras, picked per detection.
    #[arg(long)]
    pub cameras_dir: Option<PathBuf>,
    /// Point cloud, ASCII PLY or XYZ.
    #[arg(long)]
    pub cloud: PathBuf,
    /// Output directory for report.json and colored.ply.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "on")]
    pub occlusion: Toggle,
    #[arg(long, default_value_t = 1.0)]
    pub zbuffer_cell: f64,
    #[arg(long, default_value_t = 0.01)]
    pub depth_tolerance: f64,
    #[arg(long, value_enum, default_value = "original-points")]
    pub mode: Mode,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON list of `{image_id, class_id, bbox, confidence}`.
    #[arg(long)]
    pub detections: PathBuf,
    /// COCO JSON file, or a YOLO label directory.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Image size index (`file,width,height`) for YOLO labels.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Class names, one per line, for YOLO labels (default: AIRSD classes).
    #[arg(long)]
    pub classes: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub iou_threshold: f64,
    /// Write the full report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[arg(long, value_enum, conflicts_with = "spec")]
    pub builtin: Option<Builtin>,
    /// Backbone description, one `kind c_in c_out [args]` layer per line.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSON bench configuration; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Loss ids (repeatable): iou, giou, diou, ciou, inner-iou, inner-ciou.
    #[arg(long = "loss")]
    pub losses: Vec<LossKind>,
    /// Inner-box ratios (repeatable).
    #[arg(long = "ratio")]
    pub ratios: Vec<f64>,
    /// First seed; runs `--runs` consecutive seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<u64>,
    #[arg(long, value_enum)]
    pub band: Option<IouBand>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// CSV output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Rewrite an annotation set in another format.
    Convert(ConvertArgs),
    /// Class counts and box size summaries.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct DatasetInput {
    /// COCO JSON file, or a YOLO label directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Image size index for YOLO input.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Class names file for YOLO input.
    #[arg(long)]
    pub classes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[command(flatten)]
    pub source: DatasetInput,
    /// Target format.
    #[arg(long, value_enum)]
    pub format: AnnotationFormat,
    /// Output file (COCO) or directory (YOLO).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub source: DatasetInput,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene JSON; a random scene from `--seed` when absent.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Camera rig JSON; four cameras at mid-length when absent.
    #[arg(long)]
    pub rig: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8.0)]
    pub zbuffer_cell: f64,
    #[arg(long, default_value_t = 0.01)]
    pub depth_tolerance: f64,
}

/// Record of one run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<PathBuf>,
    pub options: serde_json::Value,
    pub version: String,
    pub duration_s: f64,
}

struct Run {
    command: &'static str,
    started: Instant,
}

impl Run {
    fn start(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
        }
    }

    fn finish(self, path: &Path, inputs: Vec<PathBuf>, options: serde_json::Value) -> Result<()> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            inputs,
            options,
            version: env!("CARGO_PKG_VERSION").to_string(),
            duration_s: self.started.elapsed().as_secs_f64(),
        };
        write_json(path, &manifest)
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable values");
    text.push('\n');
    write_text(path, &text)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Manifest path for a single-file output: `<file>.manifest.json`.
fn manifest_for(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    file.with_file_name(name)
}

#[derive(Debug, Deserialize)]
struct LocalizeDetection {
    #[serde(default)]
    image_id: Option<String>,
    class_id: u32,
    bbox: BBox2D,
}

fn localize(args: &LocalizeArgs) -> Result<()> {
    let run = Run::start("localize");
    let options = LocalizationOptions {
        occlusion_culling: args.occlusion == Toggle::On,
        zbuffer_cell: args.zbuffer_cell,
        depth_tolerance: args.depth_tolerance,
        selection_mode: match args.mode {
            Mode::OriginalPoints => SelectionMode::OriginalPoints,
            Mode::Backprojected => SelectionMode::Backprojected,
        },
    };
    options.validate()?;
    let detections: Vec<LocalizeDetection> = read_json(&args.detections)?;
    if let Some(c) = &args.camera {
        CameraRig::read(c)?;
    }
    let cloud = PointCloud::read(&args.cloud)?;

    // Group detections by camera so each camera projects the cloud once.
    let mut groups: Vec<(PathBuf, Vec<usize>)> = Vec::new();
    for (i, d) in detections.iter().enumerate() {
        let camera = match (&args.camera, &args.cameras_dir) {
            (Some(c), _) => c.clone(),
            (None, Some(dir)) => {
                let id = d.image_id.as_deref().ok_or_else(|| {
                    Error::invalid("detections", format!("detection {i} has no image_id to pick a camera"))
                })?;
                dir.join(format!("{id}.json"))
            }
            (None, None) => return Err(Error::invalid("arguments", "need --camera or --cameras-dir")),
        };
        match groups.iter_mut().find(|(p, _)| *p == camera) {
            Some((_, v)) => v.push(i),
            None => groups.push((camera, vec![i])),
        }
    }
    let mut results: Vec<Option<LocalizationResult>> = vec![None; detections.len()];
    let mut inputs = vec![args.detections.clone(), args.cloud.clone()];
    if let Some(c) = &args.camera {
        inputs.push(c.clone());
    }
    for (camera_path, members) in &groups {
        let rig = CameraRig::read(camera_path)?;
        if args.camera.is_none() {
            inputs.push(camera_path.clone());
        }
        let projected = ProjectedCloud::new(&rig, &cloud, &options)?;
        for &i in members {
            let d = &detections[i];
            results[i] = Some(projected.select(&d.bbox, d.class_id, &rig, &cloud, options.selection_mode));
        }
    }
    let results: Vec<LocalizationResult> = results.into_iter().map(|r| r.expect("every detection localized")).collect();
    let report: Vec<ReportEntry> = results.iter().enumerate().map(|(i, r)| ReportEntry::new(i, r)).collect();

    create_dir(&args.out)?;
    write_json(&args.out.join("report.json"), &report)?;
    let colors = color_cloud(cloud.len(), &results);
    write_text(&args.out.join("colored.ply"), &write_ply(&cloud, Some(&colors))?)?;
    for (i, r) in results.iter().enumerate() {
        log::info!("detection {i}: class {} -> {} points", r.class_id, r.indices.len());
    }
    run.finish(
        &args.out.join("manifest.json"),
        inputs,
        serde_json::json!({
            "occlusion": args.occlusion == Toggle::On,
            "zbuffer_cell": args.zbuffer_cell,
            "depth_tolerance": args.depth_tolerance,
            "mode": options.selection_mode,
        }),
    )
}

fn load_classes(path: Option<&Path>) -> Result<ClassMap> {
    match path {
        Some(p) => ClassMap::parse_names(&read_to_string(p)?),
        None => Ok(ClassMap::airsd()),
    }
}

/// A directory is read as YOLO labels, anything else as a COCO file.
fn load_annotations(input: &Path, index: Option<&Path>, classes: Option<&Path>) -> Result<AnnotationSet> {
    if input.is_dir() {
        annotations::parse_yolo(input, index, load_classes(classes)?)
    } else {
        annotations::parse_coco(input)
    }
}

fn eval(args: &EvalArgs) -> Result<()> {
    let run = Run::start("eval");
    let set = load_annotations(&args.annotations, args.index.as_deref(), args.classes.as_deref())?;
    let detections: Vec<DetectionRecord> = read_json(&args.detections)?;
    let n_classes = set.class_map().len() as u32;
    for (i, d) in detections.iter().enumerate() {
        if d.class_id >= n_classes {
            return Err(Error::invalid(
                "detections",
                format!("detection {i} has class id {} but there are {n_classes} classes", d.class_id),
            ));
        }
        if set.image(&d.image_id).is_none() {
            return Err(Error::invalid(
                "detections",
                format!("detection {i} refers to unknown image '{}'", d.image_id),
            ));
        }
    }
    let report = evaluate_with_classes(&detections, set.annotations(), args.iou_threshold, Some(n_classes))?;
    emit(&report.to_markdown(set.class_map().names()))?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
        run.finish(
            &manifest_for(out),
            vec![args.detections.clone(), args.annotations.clone()],
            serde_json::json!({ "iou_threshold": args.iou_threshold }),
        )?;
    }
    Ok(())
}

fn params(args: &ParamsArgs) -> Result<()> {
    match (&args.spec, args.builtin) {
        (Some(path), _) => {
            let spec = BackboneSpec::read(path)?;
            emit(&backbone_summary(&spec).to_markdown())?;
        }
        (None, Some(b)) => {
            let summary = backbone_summary(&BackboneSpec::builtin(b.id())?);
            emit(&summary.to_markdown())?;
            if b == Builtin::AirYolo {
                let base = backbone_summary(&BackboneSpec::builtin("yolov8n")?);
                let r = crate::arch::reduction(&base, &summary);
                emit(&format!("Reduction vs yolov8n: {:.2}%\n", 100.0 * r))?;
            }
        }
        (None, None) => {
            let base = backbone_summary(&BackboneSpec::builtin("yolov8n")?);
            let other = backbone_summary(&BackboneSpec::builtin("air-yolo")?);
            emit(&comparison_markdown("YOLOv8n", &base, "AIR-YOLO", &other))?;
        }
    }
    Ok(())
}

fn loss_bench(args: &BenchArgs) -> Result<()> {
    let run = Run::start("loss-bench");
    let mut config = match &args.config {
        Some(p) => read_json::<BenchConfig>(p)?,
        None => BenchConfig::default(),
    };
    if !args.losses.is_empty() {
        config.losses = args.losses.clone();
    }
    if !args.ratios.is_empty() {
        config.ratios = args.ratios.clone();
    }
    if args.seed.is_some() || args.runs.is_some() {
        let first = args.seed.unwrap_or(config.seeds.first().copied().unwrap_or(0));
        let runs = args.runs.unwrap_or(config.seeds.len() as u64);
        config.seeds = (first..first + runs).collect();
    }
    if let Some(b) = args.band {
        config.band = b;
    }
    if let Some(s) = args.steps {
        config.steps = s;
    }
    if let Some(lr) = args.learning_rate {
        config.learning_rate = lr;
    }
    let rows = run_bench(&config)?;
    let csv = to_csv(&rows);
    match &args.out {
        Some(out) => {
            write_text(out, &csv)?;
            run.finish(
                &manifest_for(out),
                args.config.iter().cloned().collect(),
                serde_json::to_value(&config).expect("serializable config"),
            )?;
        }
        None => emit(&csv)?,
    }
    Ok(())
}

fn dataset(cmd: &DatasetCommand) -> Result<()> {
    match cmd {
        DatasetCommand::Convert(args) => {
            let run = Run::start("dataset convert");
            let src = &args.source;
            let set = load_annotations(&src.input, src.index.as_deref(), src.classes.as_deref())?;
            let manifest = match annotations::convert(&set, args.format) {
                Serialized::Coco(text) => {
                    write_text(&args.out, &text)?;
                    manifest_for(&args.out)
                }
                Serialized::Yolo(out) => {
                    out.write_to(&args.out)?;
                    args.out.join("manifest.json")
                }
            };
            let mut inputs = vec![src.input.clone()];
            inputs.extend(src.index.iter().cloned());
            inputs.extend(src.classes.iter().cloned());
            run.finish(&manifest, inputs, serde_json::json!({ "format": args.format }))
        }
        DatasetCommand::Stats(args) => {
            let src = &args.source;
            let set = load_annotations(&src.input, src.index.as_deref(), src.classes.as_deref())?;
            let stats = annotations::dataset_stats(&set);
            emit(&format!("{}\n", serde_json::to_string_pretty(&stats).expect("serializable stats")))?;
            Ok(())
        }
    }
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let run = Run::start("simulate");
    let spec: SceneSpec = match &args.scene {
        Some(p) => read_json(p)?,
        None => random_scene_spec(args.seed),
    };
    let rig_spec: CameraRigSpec = match &args.rig {
        Some(p) => read_json(p)?,
        None => default_rig_spec(&spec.fuselage),
    };
    let scene = generate_scene(&spec)?;
    let cameras = generate_camera_ring(&rig_spec, &spec.fuselage)?;
    let vis = Visibility {
        cell: args.zbuffer_cell,
        depth_tolerance: args.depth_tolerance,
    };
    LocalizationOptions {
        occlusion_culling: true,
        zbuffer_cell: vis.cell,
        depth_tolerance: vis.depth_tolerance,
        selection_mode: SelectionMode::OriginalPoints,
    }
    .validate()?;
    let truth = ground_truth_annotations(&scene, &cameras, vis)?;

    create_dir(&args.out)?;
    write_text(&args.out.join("scene.ply"), &write_ply(&scene.cloud, None)?)?;
    write_json(&args.out.join("scene.json"), &spec)?;
    write_json(&args.out.join("rig.json"), &rig_spec)?;
    for (i, cam) in cameras.iter().enumerate() {
        let stem = camera_image_name(i);
        let stem = stem.trim_end_matches(".png");
        cam.write(&args.out.join(format!("{stem}.json")))?;
    }
    write_text(&args.out.join("ground_truth.json"), &annotations::write_coco(&truth))?;
    // Perfect detections, ready for `localize --cameras-dir` and `eval`.
    let detections: Vec<DetectionRecord> = truth
        .annotations()
        .iter()
        .map(|a| DetectionRecord {
            image_id: a.image_id.clone(),
            class_id: a.class_id,
            bbox: a.bbox,
            confidence: 1.0,
        })
        .collect();
    write_json(&args.out.join("detections.json"), &detections)?;
    run.finish(
        &args.out.join("manifest.json"),
        args.scene.iter().chain(args.rig.iter()).cloned().collect(),
        serde_json::json!({
            "seed": spec.seed,
            "zbuffer_cell": vis.cell,
            "depth_tolerance": vis.depth_tolerance,
        }),
    )
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Localize(a) => localize(a),
        Command::Eval(a) => eval(a),
        Command::Params(a) => params(a),
        Command::LossBench(a) => loss_bench(a),
        Command::Dataset(c) => dataset(c),
        Command::Simulate(a) => simulate(a),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("JDDL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::invalid("JDDL_THREADS", format!("expected a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::invalid("JDDL_THREADS", e.to_string()))
}

/// Writes to stdout; a closed pipe (`jddl ... | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io(Path::new("<stdout>"), e)),
        _ => Ok(()),
    }
}

/// Parses arguments, runs the command, and maps the outcome to an exit code.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = std::panic::catch_unwind(|| configure_threads().and_then(|()| execute(&cli)));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("jddl: {e}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
