//! End-to-end run on generated data: render true/pseudo scenes, train the
//! multi-task model on a scene-disjoint split, and report test-side
//! classification and rank-correlation metrics.
//!
//! ```bash
//! cargo run --release --example train_on_synthetic
//! ```

use std::time::Instant;

use uhdqa::cli::{cmd_evaluate, cmd_gen_synthetic, RunConfig};
use uhdqa::datasets::SyntheticSpec;
use uhdqa::imaging::ResampleKernel;

fn main() -> uhdqa::Result<()> {
    let out = std::env::temp_dir().join("uhdqa_example_synthetic");
    let scenes: usize = std::env::var("SCENES").ok().and_then(|v| v.parse().ok()).unwrap_or(12);
    let epochs: usize = std::env::var("EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(10);
    let batch: usize = std::env::var("BATCH").ok().and_then(|v| v.parse().ok()).unwrap_or(4);
    let lr: f64 = std::env::var("LR").ok().and_then(|v| v.parse().ok()).unwrap_or(1e-3);
    let input: u32 = std::env::var("INPUT").ok().and_then(|v| v.parse().ok()).unwrap_or(240);
    let seed: u64 = std::env::var("SEED").ok().and_then(|v| v.parse().ok()).unwrap_or(7);

    let t0 = Instant::now();
    let spec = SyntheticSpec {
        scenes,
        base_size: (960, 540),
        explicit_variants: vec![
            (2, ResampleKernel::Bilinear),
            (3, ResampleKernel::Bilinear),
            (2, ResampleKernel::Nearest),
        ],
        mos_span: 90.0,
        seed,
        ..SyntheticSpec::default()
    };
    let manifest = cmd_gen_synthetic(&spec, out.join("data"))?;
    println!(
        "generated {} scenes x 4 variants in {:.1?}",
        scenes,
        t0.elapsed()
    );

    let config = RunConfig {
        backbone: "tiny5".into(),
        input_size: input,
        epochs,
        batch_size: batch,
        lr,
        trials: 1,
        retrain: true,
        seed,
        ..RunConfig::default()
    };
    let t1 = Instant::now();
    let report = cmd_evaluate(&manifest, None, &config, out.join("eval"))?;
    println!("trained + evaluated in {:.1?}", t1.elapsed());
    println!(
        "test side: SRCC {:.4}  PLCC {:.4}  RMSE {:.3}  accuracy {}",
        report.mean.srcc,
        report.mean.plcc,
        report.mean.rmse,
        report
            .mean
            .accuracy
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "n/a".into()),
    );
    println!("report: {}", out.join("eval/eval_report.json").display());
    Ok(())
}
