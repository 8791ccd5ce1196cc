//! Compare the IoU-family losses on one box pair, then regress a badly
//! placed box toward its target with Inner-CIoU at three ratios.
//!
//!     cargo run --release --example losses

use jddl::bench::{median_steps, run_bench, BenchConfig, IouBand};
use jddl::losses::{loss_gradient, regress_box, CenterBox, LossKind, Ratio};

fn main() -> jddl::error::Result<()> {
    let gt = CenterBox::new(0.0, 0.0, 4.0, 2.0)?;
    let pred = CenterBox::new(1.0, 0.5, 3.0, 3.0)?;
    let ratio = Ratio::new(1.25)?;
    println!("{:<11} {:>8}  gradient (x_c, y_c, w, h)", "loss", "value");
    for kind in LossKind::ALL {
        let g = loss_gradient(kind, &pred, &gt, ratio)?;
        let value = jddl::losses::loss(kind, &pred, &gt, ratio);
        println!("{:<11} {value:8.5}  [{:+.4}, {:+.4}, {:+.4}, {:+.4}]", kind.id(), g[0], g[1], g[2], g[3]);
    }

    let far = CenterBox::new(5.0, -3.0, 1.0, 1.0)?;
    println!("\nInner-CIoU from IoU 0 to 0.9:");
    for r in [0.75, 1.0, 1.25] {
        let t = regress_box(&far, &gt, LossKind::InnerCiou, Ratio::new(r)?, 2000, 0.05)?;
        let steps = t.steps_to_iou(0.9).map_or("never".to_string(), |s| format!("{s} steps"));
        println!("  ratio {r:4}: {steps}, final IoU {:.4}", t.last().iou);
    }

    let config = BenchConfig {
        losses: vec![LossKind::Ciou, LossKind::InnerCiou],
        ratios: vec![0.75, 1.0, 1.25],
        seeds: (0..50).collect(),
        band: IouBand::Low,
        steps: 2000,
        learning_rate: 0.05,
    };
    let rows = run_bench(&config)?;
    println!("\nmedian steps over 50 low-IoU starts:");
    for kind in &config.losses {
        for r in &config.ratios {
            let sel: Vec<_> = rows.iter().filter(|row| row.loss == *kind && row.ratio == *r).collect();
            println!("  {:<10} ratio {r:4}: {}", kind.id(), median_steps(&sel));
        }
    }
    Ok(())
}
