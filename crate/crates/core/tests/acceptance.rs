//! Exit criteria. Runs without the libtest harness so every criterion prints
//! its verdict line; the process fails if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jddl::annotations::{self, ClassMap, AIRSD_CLASSES};
use jddl::bbox::BBox2D;
use jddl::bench::{median_steps, run_bench, BenchConfig, IouBand, CSV_HEADER};
use jddl::geometry::{back_project, build_projection, project_point, CameraIntrinsics, CameraPose};
use jddl::localization::{localize_detections, LocalizationOptions, SelectionMode};
use jddl::losses::{self, loss_and_gradient, CenterBox, LossKind, Ratio};
use jddl::metrics::{average_precision, evaluate, DetectionRecord, GroundTruthRecord};
use jddl::simulator::{
    default_rig_spec, generate_camera_ring, generate_scene, random_scene_spec, visible_points, Visibility,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn run(id: u32, title: &str, budget: Duration, check: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = check();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = v.pass && in_time;
    println!(
        "criterion {id} [{}] {title}: {} ({:.2?} of {:.0?}{})",
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        elapsed,
        budget,
        if in_time { "" } else { ", over budget" },
    );
    pass
}

// ---------------------------------------------------------------- 1

const YOLOV8N_ROWS: [u64; 10] = [464, 4672, 7360, 18560, 49664, 73984, 197632, 295424, 460288, 164608];
const AIR_YOLO_ROWS: [u64; 10] = [464, 4672, 3920, 18560, 22144, 73984, 87552, 295424, 240128, 164608];
const YOLOV8N_SUM: u64 = 1_272_656;
const AIR_YOLO_SUM: u64 = 911_426;

/// Runs `jddl params --builtin <name>` and reads the Params column back.
fn params_table(name: &str) -> (Vec<u64>, u64) {
    let out = Command::new(env!("CARGO_BIN_EXE_jddl"))
        .args(["params", "--builtin", name])
        .output()
        .expect("jddl runs");
    assert!(out.status.success(), "params --builtin {name} failed");
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = Vec::new();
    let mut sum = 0;
    for line in text.lines().filter(|l| l.starts_with('|')) {
        let cells: Vec<&str> = line.trim_matches('|').split('|').map(str::trim).collect();
        let Some(last) = cells.last().and_then(|c| c.parse::<u64>().ok()) else {
            continue;
        };
        if cells[0] == "Sum" {
            sum = last;
        } else {
            rows.push(last);
        }
    }
    (rows, sum)
}

fn criterion_1() -> Verdict {
    let (v8_rows, v8_sum) = params_table("yolov8n");
    let (air_rows, air_sum) = params_table("air-yolo");
    let rows_ok = v8_rows == YOLOV8N_ROWS && air_rows == AIR_YOLO_ROWS;
    let reduction = 1.0 - air_sum as f64 / v8_sum as f64;
    let in_band = (0.25..=0.32).contains(&reduction);
    let cells_sum: u64 = AIR_YOLO_ROWS.iter().sum();
    Verdict {
        pass: rows_ok && v8_sum == YOLOV8N_SUM && air_sum == AIR_YOLO_SUM && in_band,
        detail: format!(
            "20 rows {}; sums {v8_sum} (want {YOLOV8N_SUM}), {air_sum} (want {AIR_YOLO_SUM}; the table's own cells add to {cells_sum}); reduction {:.2}% in [25%, 32%]: {in_band}",
            if rows_ok { "match" } else { "differ" },
            100.0 * reduction
        ),
    }
}

// ---------------------------------------------------------------- 2

fn random_box(rng: &mut ChaCha8Rng) -> CenterBox {
    CenterBox::new(
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(0.1..8.0),
        rng.random_range(0.1..8.0),
    )
    .unwrap()
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_iou, mut worst_ciou) = (0.0f64, 0.0f64);
    for _ in 0..100_000 {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        worst_iou = worst_iou.max((losses::inner_iou(&a, &b, Ratio::ONE) - losses::iou(&a, &b)).abs());
        worst_ciou = worst_ciou.max((losses::inner_ciou_loss(&a, &b, Ratio::ONE) - losses::ciou_loss(&a, &b)).abs());
    }
    Verdict {
        pass: worst_iou <= 1e-12 && worst_ciou <= 1e-12,
        detail: format!("10^5 pairs, max |ΔIoU| = {worst_iou:.1e}, max |ΔCIoU| = {worst_ciou:.1e} (tol 1e-12)"),
    }
}

// ---------------------------------------------------------------- 3

/// Closed-form losses written independently of the library, with CIoU's
/// trade-off weight passed in so it can be held fixed.
mod oracle {
    use std::f64::consts::PI;

    pub type B = [f64; 4];

    pub fn edges(b: B, s: f64) -> [f64; 4] {
        let [x, y, w, h] = b;
        [x - s * w / 2.0, y - s * h / 2.0, x + s * w / 2.0, y + s * h / 2.0]
    }

    pub fn iou(p: B, g: B, s: f64) -> f64 {
        let (a, c) = (edges(p, s), edges(g, s));
        let iw = (a[2].min(c[2]) - a[0].max(c[0])).max(0.0);
        let ih = (a[3].min(c[3]) - a[1].max(c[1])).max(0.0);
        let inter = iw * ih;
        inter / (s * s * (p[2] * p[3] + g[2] * g[3]) - inter)
    }

    fn enclosure(p: B, g: B) -> (f64, f64) {
        let (a, c) = (edges(p, 1.0), edges(g, 1.0));
        (a[2].max(c[2]) - a[0].min(c[0]), a[3].max(c[3]) - a[1].min(c[1]))
    }

    pub fn giou(p: B, g: B) -> f64 {
        let (cw, ch) = enclosure(p, g);
        let i = iou(p, g, 1.0);
        // union = inter / iou; recompute directly to stay independent of iou's division.
        let (a, c) = (edges(p, 1.0), edges(g, 1.0));
        let inter = (a[2].min(c[2]) - a[0].max(c[0])).max(0.0) * (a[3].min(c[3]) - a[1].max(c[1])).max(0.0);
        let union = p[2] * p[3] + g[2] * g[3] - inter;
        1.0 - i + (cw * ch - union) / (cw * ch)
    }

    pub fn diou(p: B, g: B) -> f64 {
        let (cw, ch) = enclosure(p, g);
        let rho2 = (p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2);
        1.0 - iou(p, g, 1.0) + rho2 / (cw * cw + ch * ch)
    }

    pub fn v(p: B, g: B) -> f64 {
        4.0 / (PI * PI) * ((g[2] / g[3]).atan() - (p[2] / p[3]).atan()).powi(2)
    }

    pub fn alpha(p: B, g: B) -> f64 {
        let v = v(p, g);
        v / ((1.0 - iou(p, g, 1.0)) + v)
    }

    pub fn ciou(p: B, g: B, alpha: f64) -> f64 {
        diou(p, g) + alpha * v(p, g)
    }

    pub fn inner_ciou(p: B, g: B, s: f64, alpha: f64) -> f64 {
        ciou(p, g, alpha) + iou(p, g, 1.0) - iou(p, g, s)
    }
}

/// Keeps samples at least `margin` away from every min/max switch of the
/// plain and auxiliary boxes, where the loss has a kink.
fn smooth_sample(p: oracle::B, g: oracle::B, s: f64, margin: f64) -> bool {
    [1.0, s].iter().all(|&k| {
        let (a, c) = (oracle::edges(p, k), oracle::edges(g, k));
        (0..4).all(|i| (a[i] - c[i]).abs() > margin)
            && (a[2] - c[0]).abs() > margin
            && (c[2] - a[0]).abs() > margin
            && (a[3] - c[1]).abs() > margin
            && (c[3] - a[1]).abs() > margin
    })
}

fn criterion_3() -> Verdict {
    const REL_TOL: f64 = 1e-4;
    // Components whose true value is zero are compared absolutely, at a level
    // well above central-difference round-off for h = 1e-6.
    const ZERO_FLOOR: f64 = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0usize;
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    let mut worst_abs = 0.0f64;
    let mut samples = 0;
    while samples < 10_000 {
        let g = [
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(0.5..4.0),
            rng.random_range(0.5..4.0),
        ];
        let p = [
            g[0] + rng.random_range(-3.0..3.0),
            g[1] + rng.random_range(-3.0..3.0),
            g[2] * rng.random_range(0.4..2.5),
            g[3] * rng.random_range(0.4..2.5),
        ];
        let s = rng.random_range(0.5..1.5);
        if !smooth_sample(p, g, s, 1e-3) {
            continue;
        }
        samples += 1;
        let alpha = oracle::alpha(p, g);
        let closed: [(LossKind, Box<dyn Fn(oracle::B) -> f64>); 6] = [
            (LossKind::Iou, Box::new(|x| 1.0 - oracle::iou(x, g, 1.0))),
            (LossKind::Giou, Box::new(|x| oracle::giou(x, g))),
            (LossKind::Diou, Box::new(|x| oracle::diou(x, g))),
            (LossKind::Ciou, Box::new(move |x| oracle::ciou(x, g, alpha))),
            (LossKind::InnerIou, Box::new(move |x| 1.0 - oracle::iou(x, g, s))),
            (LossKind::InnerCiou, Box::new(move |x| oracle::inner_ciou(x, g, s, alpha))),
        ];
        let pred = CenterBox::new(p[0], p[1], p[2], p[3]).unwrap();
        let gt = CenterBox::new(g[0], g[1], g[2], g[3]).unwrap();
        let ratio = Ratio::new(s).unwrap();
        for (kind, f) in &closed {
            let (_, analytic) = loss_and_gradient(*kind, &pred, &gt, ratio);
            for i in 0..4 {
                let h = 1e-6 * p[i].abs().max(1.0);
                let (mut up, mut down) = (p, p);
                up[i] += h;
                down[i] -= h;
                let numeric = (f(up) - f(down)) / (2.0 * h);
                let diff = (analytic[i] - numeric).abs();
                let scale = analytic[i].abs().max(numeric.abs());
                checked += 1;
                if diff > REL_TOL * scale && diff > ZERO_FLOOR {
                    failures += 1;
                }
                worst_abs = worst_abs.max(diff);
                if scale > 1e-3 {
                    worst = worst.max(diff / scale);
                }
            }
        }
    }
    Verdict {
        pass: failures == 0,
        detail: format!(
            "10^4 samples x 6 losses, {checked} components, {failures} over rel tol 1e-4; worst rel err {worst:.1e} (components above 1e-3), worst abs err {worst_abs:.1e}"
        ),
    }
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Verdict {
    // No schedule is given for this check; this one is fixed before asserting.
    let config = |band, ratios: Vec<f64>| BenchConfig {
        losses: vec![LossKind::InnerCiou],
        ratios,
        seeds: (0..100).collect(),
        band,
        steps: 2000,
        learning_rate: 0.05,
    };
    let median = |rows: &[jddl::bench::BenchRow], r: f64| {
        median_steps(&rows.iter().filter(|row| row.ratio == r).collect::<Vec<_>>())
    };
    let low = run_bench(&config(IouBand::Low, vec![1.0, 1.25])).unwrap();
    let high = run_bench(&config(IouBand::High, vec![0.75, 1.0])).unwrap();
    let (low_1, low_125) = (median(&low, 1.0), median(&low, 1.25));
    let (high_1, high_075) = (median(&high, 1.0), median(&high, 0.75));
    Verdict {
        pass: low_125 <= low_1 && high_075 <= high_1,
        detail: format!(
            "median steps to IoU 0.9: low band ratio 1.25 = {low_125} vs 1.0 = {low_1}; high band ratio 0.75 = {high_075} vs 1.0 = {high_1}"
        ),
    }
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let angle = rng.random_range(-PI..PI);
        let q = UnitQuaternion::from_scaled_axis(axis.normalize() * angle);
        let r: Matrix3<f64> = q.to_rotation_matrix().into_inner();
        let t = Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let pose = CameraPose::new(r, t).unwrap();
        let k = CameraIntrinsics::new(
            rng.random_range(100.0..2000.0),
            rng.random_range(100.0..2000.0),
            rng.random_range(0.0..1000.0),
            rng.random_range(0.0..1000.0),
        )
        .unwrap();
        let cam = Vector3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(0.1..50.0));
        let x = r.transpose() * (cam - t);
        let px = project_point(&build_projection(&k, &pose), &x).unwrap();
        let back = back_project(&k, &pose, &px).unwrap();
        worst = worst.max((back - x).norm() / (1.0 + x.norm()));
    }
    Verdict {
        pass: worst <= 1e-6,
        detail: format!("10^4 pose/point pairs, max error / (1 + |X|) = {worst:.1e} (tol 1e-6)"),
    }
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Verdict {
    const MIN_PRECISION: f64 = 0.95;
    const MIN_RECALL: f64 = 0.95;
    const PARITY: f64 = 1e-6;
    let vis = Visibility {
        cell: 8.0,
        depth_tolerance: 0.01,
    };
    let options = LocalizationOptions {
        occlusion_culling: true,
        zbuffer_cell: vis.cell,
        depth_tolerance: vis.depth_tolerance,
        selection_mode: SelectionMode::OriginalPoints,
    };
    let back_options = LocalizationOptions {
        selection_mode: SelectionMode::Backprojected,
        ..options
    };
    let mut patches = 0usize;
    let mut low_precision = 0usize;
    let mut low_recall = 0usize;
    let mut min_precision = 1.0f64;
    let mut min_recall = 1.0f64;
    let mut min_damage_precision = 1.0f64;
    let mut worst_parity = 0.0f64;
    let mut n_points = 0usize;
    for seed in 0..100 {
        let spec = random_scene_spec(seed);
        let scene = generate_scene(&spec).unwrap();
        n_points += scene.cloud.len();
        let cameras = generate_camera_ring(&default_rig_spec(&spec.fuselage), &spec.fuselage).unwrap();
        let labels = scene.labels();
        for cam in &cameras {
            let (visible, pixels) = visible_points(&scene.cloud, cam, vis);
            // Ground truth from the simulator's own visibility: tight bounds
            // of each patch's visible points.
            let mut boxes = Vec::new();
            let mut truth = Vec::new();
            for (k, patch) in spec.patches.iter().enumerate() {
                let label = k as u32 + 1;
                let seen: Vec<usize> = scene.patch_points(label).filter(|&i| visible[i]).collect();
                if seen.is_empty() {
                    continue;
                }
                let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
                for &i in &seen {
                    x0 = x0.min(pixels[i].u);
                    y0 = y0.min(pixels[i].v);
                    x1 = x1.max(pixels[i].u);
                    y1 = y1.max(pixels[i].v);
                }
                let gt = jddl::simulator::ground_truth_bbox(&scene, label, cam, vis).unwrap();
                assert!(gt.contains(x0, y0) && gt.contains(x1, y1));
                boxes.push((gt, patch.class_id));
                truth.push((label, seen));
            }
            let results = localize_detections(&boxes, cam, &scene.cloud, &options).unwrap();
            let back = localize_detections(&boxes, cam, &scene.cloud, &back_options).unwrap();
            for ((result, other), (label, seen)) in results.iter().zip(&back).zip(&truth) {
                patches += 1;
                let selected = &result.indices;
                let hits = selected.iter().filter(|&&i| labels[i] == *label).count();
                let damaged = selected.iter().filter(|&&i| labels[i] != 0).count();
                let precision = hits as f64 / selected.len().max(1) as f64;
                let covered = seen.iter().filter(|i| selected.binary_search(i).is_ok()).count();
                let recall = covered as f64 / seen.len() as f64;
                min_precision = min_precision.min(precision);
                min_recall = min_recall.min(recall);
                min_damage_precision = min_damage_precision.min(hits as f64 / damaged.max(1) as f64);
                low_precision += usize::from(precision < MIN_PRECISION);
                low_recall += usize::from(recall < MIN_RECALL);
                assert_eq!(&result.indices, &other.indices);
                for (a, b) in result.points.iter().zip(&other.points) {
                    worst_parity = worst_parity.max((a - b).abs().max());
                }
            }
        }
    }
    Verdict {
        pass: low_precision == 0 && low_recall == 0 && worst_parity <= PARITY,
        detail: format!(
            "100 scenes ({:.0} points avg), {patches} visible patches: label precision < 95% on {low_precision} (min {:.1}%; among damage-labeled points only, min {:.1}%), recall < 95% on {low_recall} (min {:.1}%), mode parity {worst_parity:.1e}",
            n_points as f64 / 100.0,
            100.0 * min_precision,
            100.0 * min_damage_precision,
            100.0 * min_recall,
        ),
    }
}

// ---------------------------------------------------------------- 7

/// Reference evaluator: for every prefix of the confidence ranking, redo the
/// greedy matching from scratch and read off precision and recall; AP is the
/// sum over recall steps of the best precision at that recall or beyond.
mod reference {
    use super::*;

    pub fn box_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
        let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
        let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
        let inter = iw * ih;
        inter / ((a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter)
    }

    /// True-positive count among the first `k` ranked detections.
    fn tp_in_prefix(ranked: &[&DetectionRecord], gts: &[&GroundTruthRecord], k: usize, thr: f64) -> usize {
        let mut taken = vec![false; gts.len()];
        let mut tp = 0;
        for d in &ranked[..k] {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                if taken[j] || g.image_id != d.image_id {
                    continue;
                }
                let v = box_iou(&d.bbox.to_array(), &g.bbox.to_array());
                let smaller = |j: usize| g.bbox.to_array() < gts[j].bbox.to_array();
                if best.is_none_or(|(j, b)| v > b || (v == b && smaller(j))) {
                    best = Some((j, v));
                }
            }
            if let Some((j, v)) = best {
                if v >= thr {
                    taken[j] = true;
                    tp += 1;
                }
            }
        }
        tp
    }

    pub struct ClassResult {
        pub tp: usize,
        pub fp: usize,
        pub n_gt: usize,
        pub ap: Option<f64>,
    }

    pub fn class_result(dets: &[DetectionRecord], gts: &[GroundTruthRecord], class: u32, thr: f64) -> ClassResult {
        let mut ranked: Vec<&DetectionRecord> = dets.iter().filter(|d| d.class_id == class).collect();
        ranked.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
        let gts: Vec<&GroundTruthRecord> = gts.iter().filter(|g| g.class_id == class).collect();
        let n = ranked.len();
        let curve: Vec<(f64, f64)> = (1..=n)
            .map(|k| {
                let tp = tp_in_prefix(&ranked, &gts, k, thr);
                (tp as f64 / gts.len().max(1) as f64, tp as f64 / k as f64)
            })
            .collect();
        let tp = tp_in_prefix(&ranked, &gts, n, thr);
        let ap = if gts.is_empty() {
            (n > 0).then_some(0.0)
        } else {
            let mut ap = 0.0;
            let mut prev = 0.0;
            for (k, &(r, _)) in curve.iter().enumerate() {
                let best = curve[k..].iter().map(|&(_, p)| p).fold(0.0, f64::max);
                ap += (r - prev) * best;
                prev = r;
            }
            Some(ap)
        };
        ClassResult {
            tp,
            fp: n - tp,
            n_gt: gts.len(),
            ap,
        }
    }
}

fn criterion_7() -> Verdict {
    const TOL: f64 = 1e-12;
    const THR: f64 = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // Boxes on a coarse grid so exact ties and threshold-straddling overlaps occur.
    let grid_box = |rng: &mut ChaCha8Rng| {
        let x = rng.random_range(0..4) as f64;
        let y = rng.random_range(0..4) as f64;
        let w = rng.random_range(1..4) as f64;
        let h = rng.random_range(1..4) as f64;
        BBox2D::new(x, y, x + w, y + h).unwrap()
    };
    let mut cases = 0;
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    // Every (detections, ground truths) count per class up to (6, 4), for
    // two classes spread over two images.
    for n_det in 0..=6 {
        for n_gt in 0..=4 {
            for _ in 0..30 {
                let mut dets = Vec::new();
                let mut gts = Vec::new();
                for class in 0..2u32 {
                    let mut confidences: Vec<f64> = (1..=n_det).map(|k| k as f64 / (n_det + 1) as f64).collect();
                    for i in (1..confidences.len()).rev() {
                        confidences.swap(i, rng.random_range(0..=i));
                    }
                    for c in confidences {
                        dets.push(DetectionRecord {
                            image_id: format!("img{}", rng.random_range(0..2)),
                            class_id: class,
                            bbox: grid_box(&mut rng),
                            confidence: c,
                        });
                    }
                    for _ in 0..n_gt {
                        gts.push(GroundTruthRecord {
                            image_id: format!("img{}", rng.random_range(0..2)),
                            class_id: class,
                            bbox: grid_box(&mut rng),
                        });
                    }
                }
                cases += 1;
                let report = evaluate(&dets, &gts, THR).unwrap();
                let mut aps = Vec::new();
                let (mut tp, mut fp, mut n_gt_all) = (0, 0, 0);
                for cm in &report.per_class {
                    let r = reference::class_result(&dets, &gts, cm.class_id, THR);
                    tp += r.tp;
                    fp += r.fp;
                    n_gt_all += r.n_gt;
                    if let Some(ap) = r.ap {
                        aps.push(ap);
                    }
                    let same_ap = match (r.ap, cm.ap) {
                        (Some(a), Some(b)) => {
                            worst = worst.max((a - b).abs());
                            (a - b).abs() <= TOL
                        }
                        (None, None) => true,
                        _ => false,
                    };
                    if !same_ap || r.tp != cm.counts.tp || r.fp != cm.counts.fp || r.n_gt - r.tp != cm.counts.fn_ {
                        mismatches += 1;
                    }
                }
                let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
                let rc = if n_gt_all == 0 { 0.0 } else { tp as f64 / n_gt_all as f64 };
                let o = &report.overall;
                let map = if aps.is_empty() { None } else { Some(aps.iter().sum::<f64>() / aps.len() as f64) };
                let map_ok = match map {
                    Some(m) => o.map_defined && (m - o.map).abs() <= TOL,
                    None => !o.map_defined,
                };
                if !map_ok || (p - o.precision).abs() > TOL || (rc - o.recall).abs() > TOL {
                    mismatches += 1;
                }
            }
        }
    }
    let fixture = average_precision(&[true, false, true], 2).unwrap();
    let fixture_ok = (fixture - 5.0 / 6.0).abs() <= 1e-9;
    Verdict {
        pass: cases >= 1000 && mismatches == 0 && fixture_ok,
        detail: format!(
            "{cases} enumerated instances, {mismatches} mismatches, max |ΔAP| = {worst:.1e}; AP([TP,FP,TP], 2) = {fixture:.10}"
        ),
    }
}

// ---------------------------------------------------------------- 8

struct Fixture {
    /// `(file name, width, height, [(class, x_c, y_c, w, h)])`, normalized.
    images: Vec<(String, u32, u32, Vec<(u32, [f64; 4])>)>,
}

fn fixture() -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sizes = [(640, 640), (800, 600), (1024, 768), (1920, 1080)];
    let mut images = Vec::new();
    for i in 0..40 {
        let (w, h) = sizes[i % sizes.len()];
        let n = rng.random_range(0..=6);
        let boxes = (0..n)
            .map(|j| {
                let class = ((i * 7 + j) % AIRSD_CLASSES.len()) as u32;
                let bw = rng.random_range(0.02..0.5);
                let bh = rng.random_range(0.02..0.5);
                let xc = rng.random_range(bw / 2.0..1.0 - bw / 2.0);
                let yc = rng.random_range(bh / 2.0..1.0 - bh / 2.0);
                (class, [xc, yc, bw, bh])
            })
            .collect();
        images.push((format!("airsd_{i:04}.jpg"), w, h, boxes));
    }
    Fixture { images }
}

fn yolo_values(text: &str) -> Vec<(u32, [f64; 4])> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            (f[0].parse().unwrap(), [1, 2, 3, 4].map(|k| f[k].parse::<f64>().unwrap()))
        })
        .collect()
}

fn max_gap(a: &[(u32, [f64; 4])], b: &[(u32, [f64; 4])]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut worst = 0.0f64;
    for ((ca, va), (cb, vb)) in a.iter().zip(b) {
        if ca != cb {
            return None;
        }
        for k in 0..4 {
            worst = worst.max((va[k] - vb[k]).abs());
        }
    }
    Some(worst)
}

fn criterion_8() -> Verdict {
    const TOL: f64 = 1e-6;
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let classes = ClassMap::airsd();
    let used: std::collections::BTreeSet<u32> = fx.images.iter().flat_map(|i| i.3.iter().map(|b| b.0)).collect();

    // yolo -> coco -> yolo
    let labels = dir.path().join("labels");
    std::fs::create_dir(&labels).unwrap();
    let mut index = String::from("file,width,height\n");
    for (name, w, h, boxes) in &fx.images {
        index.push_str(&format!("{name},{w},{h}\n"));
        let text: String = boxes
            .iter()
            .map(|(c, v)| format!("{c} {} {} {} {}\n", v[0], v[1], v[2], v[3]))
            .collect();
        let stem = Path::new(name).file_stem().unwrap().to_string_lossy().into_owned();
        std::fs::write(labels.join(format!("{stem}.txt")), text).unwrap();
    }
    let index_path = dir.path().join("index.csv");
    std::fs::write(&index_path, index).unwrap();
    let set = annotations::parse_yolo(&labels, Some(&index_path), classes.clone()).unwrap();
    let coco = annotations::write_coco(&set);
    let back = annotations::write_yolo(&annotations::parse_coco_str(&coco, Path::new("mem.json")).unwrap());
    let mut yolo_gap = Some(0.0f64);
    for (name, _, _, boxes) in &fx.images {
        let stem = Path::new(name).file_stem().unwrap().to_string_lossy().into_owned();
        let got = yolo_values(&back.labels[&format!("{stem}.txt")]);
        yolo_gap = yolo_gap.zip(max_gap(boxes, &got)).map(|(a, b)| a.max(b));
    }

    // coco -> yolo -> coco, with 1-based category ids on input
    let mut images_json = Vec::new();
    let mut anns_json = Vec::new();
    for (i, (name, w, h, boxes)) in fx.images.iter().enumerate() {
        images_json.push(serde_json::json!({"id": i + 1, "file_name": name, "width": w, "height": h}));
        for (c, v) in boxes {
            let (wf, hf) = (*w as f64, *h as f64);
            anns_json.push(serde_json::json!({
                "id": anns_json.len() + 1,
                "image_id": i + 1,
                "category_id": c + 1,
                "bbox": [(v[0] - v[2] / 2.0) * wf, (v[1] - v[3] / 2.0) * hf, v[2] * wf, v[3] * hf],
            }));
        }
    }
    let categories: Vec<_> = AIRSD_CLASSES
        .iter()
        .enumerate()
        .map(|(i, n)| serde_json::json!({"id": i + 1, "name": n}))
        .collect();
    let coco_in = serde_json::json!({"images": images_json, "annotations": anns_json, "categories": categories});
    let set = annotations::parse_coco_str(&coco_in.to_string(), Path::new("fixture.json")).unwrap();
    let yolo_dir = dir.path().join("yolo");
    annotations::write_yolo(&set).write_to(&yolo_dir).unwrap();
    let class_names = ClassMap::parse_names(&std::fs::read_to_string(yolo_dir.join("classes.txt")).unwrap()).unwrap();
    let again = annotations::parse_yolo(&yolo_dir, Some(&yolo_dir.join("index.csv")), class_names).unwrap();
    let coco_out = annotations::parse_coco_str(&annotations::write_coco(&again), Path::new("out.json")).unwrap();
    let normalized = |s: &annotations::AnnotationSet| -> Vec<(u32, [f64; 4])> {
        s.annotations()
            .iter()
            .map(|a| {
                let img = s.image(&a.image_id).unwrap();
                let (w, h) = (img.width as f64, img.height as f64);
                let b = a.bbox;
                (a.class_id, [b.x_min() / w, b.y_min() / h, b.x_max() / w, b.y_max() / h])
            })
            .collect()
    };
    let coco_gap = max_gap(&normalized(&set), &normalized(&coco_out));
    let names_ok = coco_out.class_map().names() == ClassMap::airsd().names();
    let all_classes = used.len() == AIRSD_CLASSES.len();
    let fmt = |g: Option<f64>| g.map_or("structure changed".to_string(), |g| format!("{g:.1e}"));
    Verdict {
        pass: yolo_gap.is_some_and(|g| g <= TOL) && coco_gap.is_some_and(|g| g <= TOL) && names_ok && all_classes,
        detail: format!(
            "{} images, {} boxes over all 11 classes: yolo->coco->yolo max gap {}, coco->yolo->coco max gap {} (tol 1e-6)",
            fx.images.len(),
            fx.images.iter().map(|i| i.3.len()).sum::<usize>(),
            fmt(yolo_gap),
            fmt(coco_gap)
        ),
    }
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Verdict {
    // Detection quality, per-class results, loss-comparison values, speed and
    // inspection timing need a trained network, the real dataset and the
    // hardware rig. What can be run is the comparison harness itself.
    let out = Command::new(env!("CARGO_BIN_EXE_jddl"))
        .args(["loss-bench", "--seed", "0", "--runs", "3", "--steps", "50", "--ratio", "1.0", "--ratio", "1.25"])
        .output()
        .expect("jddl runs");
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    let header_ok = lines.next() == Some(CSV_HEADER);
    let ids: std::collections::BTreeSet<&str> = lines.filter_map(|l| l.split(',').next()).collect();
    let all_losses = LossKind::ALL.iter().all(|k| ids.contains(k.id()));
    Verdict {
        pass: out.status.success() && header_ok && all_losses,
        detail: "trained-detector results (mAP 65.2%, ablations, loss-comparison values, per-class table, 110 FPS, inspection timing) are not reproducible without the model, data and rig; substituted by criteria 1-8, and loss-bench emits the loss-comparison structure for all six losses".to_string(),
    }
}

fn main() {
    let results = [
        run(1, "backbone parameter table", Duration::from_secs(1), criterion_1),
        run(2, "inner-IoU degeneracy at ratio 1", Duration::from_secs(5), criterion_2),
        run(3, "analytic gradients vs finite differences", Duration::from_secs(30), criterion_3),
        run(4, "ratio convergence direction", Duration::from_secs(60), criterion_4),
        run(5, "projection round trip", Duration::from_secs(5), criterion_5),
        run(6, "2D-to-3D localization end to end", Duration::from_secs(120), criterion_6),
        run(7, "metrics vs exhaustive reference", Duration::from_secs(30), criterion_7),
        run(8, "annotation round trips", Duration::from_secs(5), criterion_8),
        run(9, "non-reproducible results stated", Duration::from_secs(30), criterion_9),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
