//! Scratch diagnostic: per-item test predictions on the synthetic split.

use uhdqa::cli::RunConfig;
use uhdqa::datasets::{load_manifest, make_scene_splits, SyntheticSpec};
use uhdqa::imaging::ResampleKernel;
use uhdqa::pipeline::{predict_entry, prepare_all};
use uhdqa::model::QaModel;
use uhdqa::training::{train_with_optimizer, CheckpointExtra};

fn main() -> uhdqa::Result<()> {
    let out = std::env::temp_dir().join("uhdqa_diag");
    let scenes: usize = std::env::var("SCENES").ok().and_then(|v| v.parse().ok()).unwrap_or(30);
    let epochs: usize = std::env::var("EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(10);
    let lr: f64 = std::env::var("LR").ok().and_then(|v| v.parse().ok()).unwrap_or(1e-3);
    let batch: usize = std::env::var("BATCH").ok().and_then(|v| v.parse().ok()).unwrap_or(4);

    let spec = SyntheticSpec {
        scenes,
        base_size: (960, 540),
        explicit_variants: vec![
            (2, ResampleKernel::Bilinear),
            (3, ResampleKernel::Bilinear),
            (2, ResampleKernel::Nearest),
        ],
        mos_span: 90.0,
        seed: 7,
        ..SyntheticSpec::default()
    };
    let data_dir = out.join("data");
    if !data_dir.join("manifest.csv").exists() || std::env::var("REGEN").is_ok() {
        uhdqa::datasets::generate_synthetic(&spec, &data_dir)?;
        println!("regenerated");
    }
    let entries = load_manifest(data_dir.join("manifest.csv"))?;
    let splits = make_scene_splits(&entries, 0.8, 1, 7)?;
    let split = &splits[0];

    let input_size: u32 = std::env::var("INPUT").ok().and_then(|v| v.parse().ok()).unwrap_or(0);
    let mseed: u64 = std::env::var("MSEED").ok().and_then(|v| v.parse().ok()).unwrap_or(7);
    let ch: usize = std::env::var("CH").ok().and_then(|v| v.parse().ok()).unwrap_or(8);
    let config = RunConfig {
        backbone: "tiny5".into(),
        input_size,
        epochs,
        batch_size: batch,
        lr,
        seed: mseed,
        ..RunConfig::default()
    };
    let extra = CheckpointExtra {
        mos_lo: 0.0,
        mos_hi: 100.0,
        normalize_mos: true,
        train_mode: "multitask_uncertainty".into(),
    };
    let measure = config.texture_measure()?;
    let mut bspec = config.backbone_spec()?;
    bspec.stage_channels = [ch, ch * 2, ch * 4, ch * 8];
    let train_entries = split.train_entries(&entries);
    let samples = prepare_all(
        &train_entries,
        &data_dir,
        config.patch_config(),
        &measure,
        bspec.input_size,
        0.5,
        |mos| extra.normalize_mos_value(mos),
    )?;
    let mut model = QaModel::new(bspec, [true; 4], 128, mseed)?;
    let t = std::time::Instant::now();
    let (log, _) = train_with_optimizer(&mut model, &samples, &config.train_config()?)?;
    println!("trained in {:.1?}", t.elapsed());
    for e in &log.epochs {
        println!(
            "epoch {:2}: l_c {:.4} l_q {:.5} overall {:.4} s1 {:.3} s2 {:.3}",
            e.epoch,
            e.l_c.unwrap_or(f64::NAN),
            e.l_q.unwrap_or(f64::NAN),
            e.l_overall,
            e.sigma1_sq,
            e.sigma2_sq
        );
    }

    println!("\ntest items (scene / variant: mos -> q_pred, y_pred):");
    let mut rows: Vec<(String, f64, f64, f64)> = Vec::new();
    for entry in split.test_entries(&entries) {
        let score = predict_entry(&model, entry, &data_dir, config.patch_config(), &measure, 0.5)?;
        rows.push((
            entry.media_path.clone(),
            entry.mos,
            extra.denormalize_q(score.prediction.q_score),
            score.prediction.y_pred,
        ));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    for (path, mos, q, y) in &rows {
        println!("{path:34} mos {mos:6.2} -> q {q:7.3} y {y:.3}");
    }
    let preds: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let moses: Vec<f64> = rows.iter().map(|r| r.1).collect();
    println!("\nSRCC {:.4}", uhdqa::metrics::srcc(&preds, &moses)?);
    Ok(())
}
