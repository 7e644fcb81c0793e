//! Experiment commands behind the `uhdqa` binary: patch-selection
//! diagnostics, training, scene-disjoint evaluation, the ablation sweeps,
//! single-item scoring and synthetic data generation.
//!
//! Configuration precedence is CLI flags over config file over defaults;
//! the config file is a flat key-value JSON mirroring [`RunConfig`].

use std::path::{Path, PathBuf};

use crate::backbone::{stage_mask_variants, BackboneSpec, WeightsSource};
use crate::datasets::{
    generate_synthetic, load_manifest, make_scene_splits, Label, ManifestEntry, MediaKind,
    SplitSpec, SyntheticSpec,
};
use crate::error::{io_err, Error, Result};
use crate::heads::{decide_class, ClassDecision};
use crate::imaging::{to_gray, RgbImage};
use crate::metrics::{
    classification_report, regression_report, EvalReport, MetricSummary, SplitMetrics,
};
use crate::model::QaModel;
use crate::pipeline::{predict_entry, prepare_all, PatchConfig};
use crate::seeding;
use crate::texture::{rank_patches, score_tiles, GlcmConfig, GlcmNormalization, TextureMeasure};
use crate::training::{
    save_checkpoint, train_with_optimizer, CheckpointExtra, TrainConfig, TrainMode,
};

/// Flat experiment configuration; every key can live in a JSON config file
/// and be overridden by a CLI flag.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // patch selection
    pub patch_sw: u32,
    pub patch_sh: u32,
    pub patch_n: usize,
    pub measure: String,
    pub glcm_dx: i32,
    pub glcm_dy: i32,
    pub glcm_levels: usize,
    pub glcm_normalization: String,
    pub glcm_four_offsets: bool,
    pub local_variance_block: u32,
    pub gray_diff_dx: i32,
    pub gray_diff_dy: i32,
    // backbone
    pub backbone: String,
    pub input_size: u32,
    pub weights: Option<PathBuf>,
    pub stage_mask: String,
    pub hidden_dim: usize,
    // training
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_period: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: String,
    pub w_c: f64,
    pub w_q: f64,
    pub per_patch_losses: bool,
    pub freeze_backbone: bool,
    pub normalize_mos: bool,
    // evaluation
    pub trials: usize,
    pub ratio: f64,
    pub alpha: f64,
    pub retrain: bool,
    pub frame_interval: f64,
    pub threshold: f64,
    // shared
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            patch_sw: 240,
            patch_sh: 240,
            patch_n: 3,
            measure: "glcm_contrast".into(),
            glcm_dx: 1,
            glcm_dy: 0,
            glcm_levels: 256,
            glcm_normalization: "image_area".into(),
            glcm_four_offsets: false,
            local_variance_block: 8,
            gray_diff_dx: 1,
            gray_diff_dy: 0,
            backbone: "std5".into(),
            input_size: 0,
            weights: None,
            stage_mask: "BL_all".into(),
            hidden_dim: 128,
            lr: 2e-4,
            lr_decay: 0.9,
            decay_period: 10,
            epochs: 50,
            batch_size: 16,
            mode: "multitask_uncertainty".into(),
            w_c: 0.5,
            w_q: 0.5,
            per_patch_losses: false,
            freeze_backbone: false,
            normalize_mos: true,
            trials: 10,
            ratio: 0.8,
            alpha: 0.05,
            retrain: false,
            frame_interval: 0.5,
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn patch_config(&self) -> PatchConfig {
        PatchConfig { sw: self.patch_sw, sh: self.patch_sh, n: self.patch_n }
    }

    pub fn texture_measure(&self) -> Result<TextureMeasure> {
        let normalize_by = match self.glcm_normalization.as_str() {
            "image_area" => GlcmNormalization::ImageArea,
            "valid_pairs" => GlcmNormalization::ValidPairs,
            other => {
                return Err(Error::Config(format!("unknown glcm normalization {other:?}")))
            }
        };
        match self.measure.as_str() {
            "glcm_contrast" => Ok(TextureMeasure::GlcmContrast {
                cfg: GlcmConfig {
                    dx: self.glcm_dx,
                    dy: self.glcm_dy,
                    levels: self.glcm_levels,
                    normalize_by,
                },
                four_offsets: self.glcm_four_offsets,
            }),
            "variance" => Ok(TextureMeasure::Variance),
            "local_variance" => Ok(TextureMeasure::LocalVariance {
                block: self.local_variance_block,
            }),
            "gray_diff_entropy" => Ok(TextureMeasure::GrayDiffEntropy {
                dx: self.gray_diff_dx,
                dy: self.gray_diff_dy,
            }),
            "random" => Ok(TextureMeasure::Random { seed: self.seed }),
            other => Err(Error::Config(format!("unknown texture measure {other:?}"))),
        }
    }

    pub fn backbone_spec(&self) -> Result<BackboneSpec> {
        let weights_source = match &self.weights {
            Some(path) => WeightsSource::PretrainedFile(path.clone()),
            None => WeightsSource::Random { seed: self.seed },
        };
        let mut spec = match self.backbone.as_str() {
            "std5" => BackboneSpec::standard(weights_source),
            "tiny5" => BackboneSpec {
                weights_source,
                ..BackboneSpec::tiny(self.seed)
            },
            other => return Err(Error::Config(format!("unknown backbone {other:?}"))),
        };
        if self.input_size > 0 {
            spec.input_size = self.input_size;
        }
        Ok(spec)
    }

    pub fn parsed_stage_mask(&self) -> Result<[bool; 4]> {
        parse_stage_mask(&self.stage_mask)
    }

    pub fn train_mode(&self) -> Result<TrainMode> {
        match self.mode.as_str() {
            "multitask_uncertainty" => Ok(TrainMode::MultitaskUncertainty),
            "multitask_fixed" => Ok(TrainMode::MultitaskFixed { w_c: self.w_c, w_q: self.w_q }),
            "classification_only" => Ok(TrainMode::ClassificationOnly),
            "regression_only" => Ok(TrainMode::RegressionOnly),
            other => Err(Error::Config(format!("unknown training mode {other:?}"))),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            lr: self.lr,
            lr_decay: self.lr_decay,
            decay_period: self.decay_period,
            epochs: self.epochs,
            batch_size: self.batch_size,
            mode: self.train_mode()?,
            seed: self.seed,
            per_patch_losses: self.per_patch_losses,
            freeze_backbone: self.freeze_backbone,
        })
    }
}

/// Accepts the named fusion variants (`BL`, `BL_234`, `BL_134`, `BL_124`,
/// `BL_all`) or a 4-character bit string like `0111`.
pub fn parse_stage_mask(s: &str) -> Result<[bool; 4]> {
    for (name, mask) in stage_mask_variants() {
        if s == name {
            return Ok(mask);
        }
    }
    let bits: Vec<char> = s.chars().collect();
    if bits.len() == 4 && bits.iter().all(|c| *c == '0' || *c == '1') {
        let mask = [bits[0] == '1', bits[1] == '1', bits[2] == '1', bits[3] == '1'];
        if !mask.iter().any(|&b| b) {
            return Err(Error::EmptyFusion);
        }
        return Ok(mask);
    }
    Err(Error::Config(format!(
        "stage mask {s:?} is neither a named variant nor a 4-bit string"
    )))
}

fn manifest_mos_range(entries: &[ManifestEntry]) -> Result<(f64, f64)> {
    let range = entries
        .first()
        .ok_or_else(|| Error::EmptyInput("manifest has no entries".into()))?
        .mos_range;
    for e in entries {
        if e.mos_range != range {
            return Err(Error::ManifestValidation(format!(
                "mixed MOS ranges in one manifest: {:?} vs {:?} ({})",
                range, e.mos_range, e.media_path
            )));
        }
    }
    Ok(range)
}

fn checkpoint_extra(config: &RunConfig, range: (f64, f64)) -> Result<CheckpointExtra> {
    Ok(CheckpointExtra {
        mos_lo: range.0,
        mos_hi: range.1,
        normalize_mos: config.normalize_mos,
        train_mode: config.train_mode()?.name().to_string(),
    })
}

fn require_labels_for_mode(entries: &[&ManifestEntry], mode: TrainMode) -> Result<()> {
    if mode.uses_classification() {
        if let Some(e) = entries.iter().find(|e| e.label == Label::Unlabeled) {
            return Err(Error::ManifestValidation(format!(
                "{} is unlabeled but mode {} trains the classifier",
                e.media_path,
                mode.name()
            )));
        }
    }
    Ok(())
}

/// Outputs of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub log_csv: PathBuf,
    pub final_l_overall: f64,
}

/// Trains on the full manifest and writes `checkpoint.uqa` plus
/// `train_log.csv` under `out_dir`.
pub fn cmd_train(
    manifest_path: impl AsRef<Path>,
    config: &RunConfig,
    out_dir: impl AsRef<Path>,
) -> Result<TrainOutputs> {
    let manifest_path = manifest_path.as_ref();
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let entries = load_manifest(manifest_path)?;
    let entry_refs: Vec<&ManifestEntry> = entries.iter().collect();
    let train_cfg = config.train_config()?;
    require_labels_for_mode(&entry_refs, train_cfg.mode)?;
    let range = manifest_mos_range(&entries)?;
    let extra = checkpoint_extra(config, range)?;

    let manifest_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let measure = config.texture_measure()?;
    let spec = config.backbone_spec()?;
    let samples = prepare_all(
        &entry_refs,
        manifest_dir,
        config.patch_config(),
        &measure,
        spec.input_size,
        config.frame_interval,
        |mos| extra.normalize_mos_value(mos),
    )?;

    let mut model = QaModel::new(spec, config.parsed_stage_mask()?, config.hidden_dim, config.seed)?;
    let (log, optimizer) = train_with_optimizer(&mut model, &samples, &train_cfg)?;

    let checkpoint = out_dir.join("checkpoint.uqa");
    save_checkpoint(&checkpoint, &model, &optimizer, train_cfg.epochs, &extra)?;
    let log_csv = out_dir.join("train_log.csv");
    crate::training::write_train_log(&log_csv, &log)?;
    Ok(TrainOutputs {
        checkpoint,
        log_csv,
        final_l_overall: log.epochs.last().map(|e| e.l_overall).unwrap_or(f64::NAN),
    })
}

/// Test-side predictions of one split evaluated into split metrics.
fn evaluate_split(
    model: &QaModel,
    extra: &CheckpointExtra,
    entries: &[ManifestEntry],
    split: &SplitSpec,
    manifest_dir: &Path,
    config: &RunConfig,
) -> Result<SplitMetrics> {
    let measure = config.texture_measure()?;
    let test = split.test_entries(entries);
    if test.is_empty() {
        return Err(Error::EmptyInput(format!(
            "trial {} has an empty test side",
            split.trial_index
        )));
    }
    let mut preds = Vec::with_capacity(test.len());
    let mut moses = Vec::with_capacity(test.len());
    let mut decisions = Vec::new();
    let mut labels = Vec::new();
    for entry in &test {
        let score = predict_entry(
            model,
            entry,
            manifest_dir,
            config.patch_config(),
            &measure,
            config.frame_interval,
        )?;
        preds.push(extra.denormalize_q(score.prediction.q_score));
        moses.push(entry.mos);
        match entry.label {
            Label::True4k => {
                decisions.push(decide_class(&score.prediction, config.threshold));
                labels.push(ClassDecision::True4k);
            }
            Label::Pseudo4k => {
                decisions.push(decide_class(&score.prediction, config.threshold));
                labels.push(ClassDecision::Pseudo4k);
            }
            Label::Unlabeled => {}
        }
    }
    let classification = if labels.is_empty() {
        None
    } else {
        Some(classification_report(&decisions, &labels)?)
    };
    Ok(SplitMetrics {
        trial: split.trial_index,
        fingerprint: split.fingerprint(),
        regression: regression_report(&preds, &moses)?,
        classification,
    })
}

/// Trains a fresh model on the train side of a split.
fn retrain_for_split(
    entries: &[ManifestEntry],
    split: &SplitSpec,
    manifest_dir: &Path,
    config: &RunConfig,
    extra: &CheckpointExtra,
) -> Result<QaModel> {
    let train_cfg = TrainConfig {
        // one independent stream per trial keeps trials comparable across
        // paired ablation rows while decorrelating them from each other
        seed: seeding::derive(config.seed, 1000 + split.trial_index as u64),
        ..config.train_config()?
    };
    let train_entries = split.train_entries(entries);
    require_labels_for_mode(&train_entries, train_cfg.mode)?;
    let measure = config.texture_measure()?;
    let mut spec = config.backbone_spec()?;
    if let WeightsSource::Random { .. } = spec.weights_source {
        spec.weights_source = WeightsSource::Random { seed: train_cfg.seed };
    }
    let samples = prepare_all(
        &train_entries,
        manifest_dir,
        config.patch_config(),
        &measure,
        spec.input_size,
        config.frame_interval,
        |mos| extra.normalize_mos_value(mos),
    )?;
    let mut model = QaModel::new(
        spec,
        config.parsed_stage_mask()?,
        config.hidden_dim,
        train_cfg.seed,
    )?;
    train_with_optimizer(&mut model, &samples, &train_cfg)?;
    Ok(model)
}

/// Runs `trials` scene-disjoint splits. With `retrain` (or when no
/// checkpoint is given) a fresh model is trained on each split's train
/// side; otherwise the checkpoint is evaluated on every test side. Writes
/// `eval_report.json` under `out_dir`.
pub fn cmd_evaluate(
    manifest_path: impl AsRef<Path>,
    checkpoint: Option<&Path>,
    config: &RunConfig,
    out_dir: impl AsRef<Path>,
) -> Result<EvalReport> {
    let manifest_path = manifest_path.as_ref();
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let entries = load_manifest(manifest_path)?;
    let manifest_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let splits = make_scene_splits(&entries, config.ratio, config.trials, config.seed)?;
    let range = manifest_mos_range(&entries)?;

    let retrain = config.retrain || checkpoint.is_none();
    let mut per_split = Vec::with_capacity(splits.len());
    if retrain {
        let extra = checkpoint_extra(config, range)?;
        for split in &splits {
            let model = retrain_for_split(&entries, split, manifest_dir, config, &extra)?;
            per_split.push(evaluate_split(&model, &extra, &entries, split, manifest_dir, config)?);
        }
    } else {
        let path = checkpoint.expect("checked by retrain flag");
        let (model, _optimizer, _epoch, extra) = crate::training::load_checkpoint(path)?;
        for split in &splits {
            per_split.push(evaluate_split(&model, &extra, &entries, split, manifest_dir, config)?);
        }
    }

    let report = EvalReport::aggregate(per_split)?;
    let json = serde_json::to_string_pretty(&report)?;
    let out = out_dir.join("eval_report.json");
    std::fs::write(&out, json).map_err(io_err(&out))?;
    Ok(report)
}

/// Which experiment dimension an ablation run sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    StageMasks,
    TextureMeasures,
    PatchGrid,
    LossModes,
}

impl SweepKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "stage_masks" => Ok(SweepKind::StageMasks),
            "texture_measures" => Ok(SweepKind::TextureMeasures),
            "patch_grid" => Ok(SweepKind::PatchGrid),
            "loss_modes" => Ok(SweepKind::LossModes),
            other => Err(Error::Config(format!("unknown sweep {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepKind::StageMasks => "stage_masks",
            SweepKind::TextureMeasures => "texture_measures",
            SweepKind::PatchGrid => "patch_grid",
            SweepKind::LossModes => "loss_modes",
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub fingerprints: Vec<String>,
    pub mean: MetricSummary,
    pub std: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AblationTable {
    pub sweep: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("name,srcc,krcc,plcc,rmse,p_t,p_f,r_t,r_f,accuracy,fingerprints\n");
        for row in &self.rows {
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{}\n",
                row.name,
                row.mean.srcc,
                row.mean.krcc,
                row.mean.plcc,
                row.mean.rmse,
                opt(row.mean.p_t),
                opt(row.mean.p_f),
                opt(row.mean.r_t),
                opt(row.mean.r_f),
                opt(row.mean.accuracy),
                row.fingerprints.join(";"),
            ));
        }
        out
    }
}

/// The sweep points of one ablation dimension as config edits.
fn sweep_points(sweep: SweepKind, base: &RunConfig) -> Vec<(String, RunConfig)> {
    match sweep {
        SweepKind::StageMasks => stage_mask_variants()
            .iter()
            .map(|(name, _)| {
                let mut cfg = base.clone();
                cfg.stage_mask = (*name).to_string();
                ((*name).to_string(), cfg)
            })
            .collect(),
        SweepKind::TextureMeasures => [
            "glcm_contrast",
            "variance",
            "local_variance",
            "gray_diff_entropy",
            "random",
        ]
        .iter()
        .map(|name| {
            let mut cfg = base.clone();
            cfg.measure = (*name).to_string();
            ((*name).to_string(), cfg)
        })
        .collect(),
        SweepKind::PatchGrid => {
            let mut points = Vec::new();
            for &size in &[120u32, 240, 480] {
                for &n in &[3usize, 5, 7] {
                    let mut cfg = base.clone();
                    cfg.patch_sw = size;
                    cfg.patch_sh = size;
                    cfg.patch_n = n;
                    points.push((format!("{size}x{size}_n{n}"), cfg));
                }
            }
            points
        }
        SweepKind::LossModes => {
            let mut points = Vec::new();
            for mode in [
                "classification_only",
                "regression_only",
                "multitask_fixed",
                "multitask_uncertainty",
            ] {
                let mut cfg = base.clone();
                cfg.mode = mode.to_string();
                points.push((mode.to_string(), cfg));
            }
            points
        }
    }
}

/// One retrained evaluation per sweep point over identical splits (paired
/// design); writes `ablation_<sweep>.csv` and `.json` under `out_dir`.
pub fn cmd_ablate(
    manifest_path: impl AsRef<Path>,
    config: &RunConfig,
    sweep: SweepKind,
    out_dir: impl AsRef<Path>,
) -> Result<AblationTable> {
    let manifest_path = manifest_path.as_ref();
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let entries = load_manifest(manifest_path)?;
    let manifest_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let splits = make_scene_splits(&entries, config.ratio, config.trials, config.seed)?;
    let range = manifest_mos_range(&entries)?;

    let mut rows = Vec::new();
    for (name, row_config) in sweep_points(sweep, config) {
        let extra = checkpoint_extra(&row_config, range)?;
        let mut per_split = Vec::with_capacity(splits.len());
        for split in &splits {
            let model = retrain_for_split(&entries, split, manifest_dir, &row_config, &extra)?;
            per_split.push(evaluate_split(
                &model,
                &extra,
                &entries,
                split,
                manifest_dir,
                &row_config,
            )?);
        }
        let fingerprints: Vec<String> = per_split.iter().map(|s| s.fingerprint.clone()).collect();
        let report = EvalReport::aggregate(per_split)?;
        rows.push(AblationRow {
            name,
            fingerprints,
            mean: report.mean,
            std: report.std,
        });
    }

    let table = AblationTable { sweep: sweep.name().to_string(), rows };
    let csv_path = out_dir.join(format!("ablation_{}.csv", sweep.name()));
    std::fs::write(&csv_path, table.to_csv()).map_err(io_err(&csv_path))?;
    let json_path = out_dir.join(format!("ablation_{}.json", sweep.name()));
    std::fs::write(&json_path, serde_json::to_string_pretty(&table)?).map_err(io_err(&json_path))?;
    Ok(table)
}

/// Scored grid of one image with the top-N flagged, rank order.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SelectionOutput {
    pub csv: PathBuf,
    pub preview: Option<PathBuf>,
    pub selected: Vec<usize>,
}

/// Scores the full grid of an image, writes `patches.csv` (rank order with
/// a `selected` column) and optionally an annotated preview PNG.
pub fn cmd_select_patches(
    image_path: impl AsRef<Path>,
    config: &RunConfig,
    out_dir: impl AsRef<Path>,
    preview: bool,
) -> Result<SelectionOutput> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let img = RgbImage::load(image_path.as_ref())?;
    let gray = to_gray(&img);
    let measure = config.texture_measure()?;
    let scored = score_tiles(&gray, config.patch_sw, config.patch_sh, &measure)?;
    let ranked = rank_patches(scored, config.patch_n.min(config.patch_n))?;
    // rank the full grid for the CSV: re-rank everything, flag the top n
    let all_ranked = {
        let scored = score_tiles(&gray, config.patch_sw, config.patch_sh, &measure)?;
        let total = scored.len();
        rank_patches(scored, total)?
    };
    let selected: Vec<usize> = ranked.iter().map(|r| r.index).collect();

    let csv = out_dir.join("patches.csv");
    let mut text = String::from("index,x0,y0,sw,sh,score,selected\n");
    for r in &all_ranked {
        let flag = selected.contains(&r.index) as u8;
        text.push_str(&format!(
            "{},{},{},{},{},{:.6},{}\n",
            r.index, r.x0, r.y0, r.sw, r.sh, r.score, flag
        ));
    }
    std::fs::write(&csv, text).map_err(io_err(&csv))?;

    let preview_path = if preview {
        let mut annotated = img.clone();
        for r in &ranked {
            draw_rect(&mut annotated, r.x0, r.y0, r.sw, r.sh, [255, 32, 32]);
        }
        let path = out_dir.join("patches_preview.png");
        annotated.save_png(&path)?;
        Some(path)
    } else {
        None
    };

    Ok(SelectionOutput { csv, preview: preview_path, selected })
}

/// 3px rectangle outline.
fn draw_rect(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32, rgb: [u8; 3]) {
    let x1 = (x0 + w).min(img.width());
    let y1 = (y0 + h).min(img.height());
    for t in 0..3u32 {
        for x in x0..x1 {
            if y0 + t < img.height() {
                img.set_pixel(x, y0 + t, rgb);
            }
            if y1 > t + 1 {
                img.set_pixel(x, y1 - 1 - t, rgb);
            }
        }
        for y in y0..y1 {
            if x0 + t < img.width() {
                img.set_pixel(x0 + t, y, rgb);
            }
            if x1 > t + 1 {
                img.set_pixel(x1 - 1 - t, y, rgb);
            }
        }
    }
}

/// Single-item scoring result.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoreOutput {
    pub y_pred: f64,
    pub decision: String,
    pub q_score: f64,
    pub patches_used: usize,
    pub frames: usize,
}

/// Scores one image or frame directory with a trained checkpoint.
pub fn cmd_score(
    media_path: impl AsRef<Path>,
    checkpoint: impl AsRef<Path>,
    config: &RunConfig,
) -> Result<ScoreOutput> {
    let media_path = media_path.as_ref();
    let (model, _optimizer, _epoch, extra) = crate::training::load_checkpoint(checkpoint.as_ref())?;

    let media_kind = if media_path.is_dir() {
        MediaKind::FrameDir
    } else {
        MediaKind::Image
    };
    let entry = ManifestEntry {
        media_path: media_path.display().to_string(),
        scene_id: "adhoc".into(),
        mos: extra.mos_lo,
        mos_range: (extra.mos_lo, extra.mos_hi),
        label: Label::Unlabeled,
        media_kind,
    };
    let measure = config.texture_measure()?;
    let score = predict_entry(
        &model,
        &entry,
        Path::new("."),
        config.patch_config(),
        &measure,
        config.frame_interval,
    )?;
    Ok(ScoreOutput {
        y_pred: score.prediction.y_pred,
        decision: decide_class(&score.prediction, config.threshold).name().to_string(),
        q_score: extra.denormalize_q(score.prediction.q_score),
        patches_used: score.patches_used,
        frames: score.frames,
    })
}

/// Renders the synthetic dataset; returns the manifest path.
pub fn cmd_gen_synthetic(spec: &SyntheticSpec, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    generate_synthetic(spec, out_dir.as_ref())?;
    Ok(out_dir.as_ref().join("manifest.csv"))
}
