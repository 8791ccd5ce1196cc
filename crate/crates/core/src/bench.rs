//! Seeded box-regression experiments comparing the loss family.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{iou, regress_box, CenterBox, LossKind, Ratio};

/// IoU that counts as converged in bench output.
pub const TARGET_IOU: f64 = 0.9;

pub const CSV_HEADER: &str = "loss_id,ratio,seed,init_iou,steps_to_0.9,final_iou,final_loss";

/// Which starting overlaps to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum IouBand {
    /// Initial IoU below 0.2 (including disjoint boxes).
    Low,
    /// Initial IoU in (0.7, 0.9).
    High,
}

impl IouBand {
    fn accepts(&self, iou: f64) -> bool {
        match self {
            IouBand::Low => iou < 0.2,
            IouBand::High => iou > 0.7 && iou < TARGET_IOU,
        }
    }
}

/// Draws `(init, gt)` for a seed. Ground truth has its center in
/// `[-5, 5]²` and sides in `[1, 4]`; the initial box is a perturbed copy
/// redrawn until its IoU lies in `band`.
pub fn sample_pair(seed: u64, band: IouBand) -> (CenterBox, CenterBox) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt = CenterBox {
        x_c: rng.random_range(-5.0..5.0),
        y_c: rng.random_range(-5.0..5.0),
        w: rng.random_range(1.0..4.0),
        h: rng.random_range(1.0..4.0),
    };
    let (shift, log2_size) = match band {
        IouBand::Low => (1.5, 1.0),
        IouBand::High => (0.15, 0.2),
    };
    loop {
        let init = CenterBox {
            x_c: gt.x_c + gt.w * rng.random_range(-shift..shift),
            y_c: gt.y_c + gt.h * rng.random_range(-shift..shift),
            w: gt.w * 2f64.powf(rng.random_range(-log2_size..log2_size)),
            h: gt.h * 2f64.powf(rng.random_range(-log2_size..log2_size)),
        };
        if band.accepts(iou(&init, &gt)) {
            return (init, gt);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub losses: Vec<LossKind>,
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    pub band: IouBand,
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            losses: LossKind::ALL.to_vec(),
            ratios: vec![0.75, 1.0, 1.25],
            seeds: (0..100).collect(),
            band: IouBand::Low,
            steps: 1000,
            learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub loss: LossKind,
    pub ratio: f64,
    pub seed: u64,
    pub init_iou: f64,
    pub steps_to_target: Option<usize>,
    pub final_iou: f64,
    pub final_loss: f64,
}

/// Runs every (loss, ratio, seed) trajectory. Rows come back ordered by
/// loss, then ratio, then seed, independent of thread scheduling.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    let ratios = config
        .ratios
        .iter()
        .map(|&r| Ratio::new(r))
        .collect::<Result<Vec<_>>>()?;
    if !(config.learning_rate > 0.0) {
        return Err(Error::invalid("learning rate", "must be positive"));
    }
    let jobs: Vec<(LossKind, Ratio, u64)> = config
        .losses
        .iter()
        .flat_map(|&l| ratios.iter().flat_map(move |&r| config.seeds.iter().map(move |&s| (l, r, s))))
        .collect();
    jobs.par_iter()
        .map(|&(loss, ratio, seed)| {
            let (init, gt) = sample_pair(seed, config.band);
            let traj = regress_box(&init, &gt, loss, ratio, config.steps, config.learning_rate)?;
            let last = traj.last();
            Ok(BenchRow {
                loss,
                ratio: ratio.get(),
                seed,
                init_iou: traj.steps[0].iou,
                steps_to_target: traj.steps_to_iou(TARGET_IOU),
                final_iou: last.iou,
                final_loss: last.loss,
            })
        })
        .collect()
}

/// Bench rows as CSV; a trajectory that never reaches the target leaves
/// `steps_to_0.9` empty.
pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let steps = r.steps_to_target.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.loss.id(),
            r.ratio,
            r.seed,
            r.init_iou,
            steps,
            r.final_iou,
            r.final_loss
        );
    }
    out
}

/// Median steps-to-target with unconverged runs counted as `+inf`.
pub fn median_steps(rows: &[&BenchRow]) -> f64 {
    let mut v: Vec<f64> = rows
        .iter()
        .map(|r| r.steps_to_target.map_or(f64::INFINITY, |s| s as f64))
        .collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
