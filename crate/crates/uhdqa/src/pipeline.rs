//! Glue between the dataset manifests and the model: patch selection per
//! media item, training-sample preparation, and pooled prediction with
//! temporal averaging for frame directories.

use std::path::Path;

use rayon::prelude::*;

use crate::backbone::adapt_patch;
use crate::datasets::{sample_frames, Label, ManifestEntry, MediaKind};
use crate::error::{Error, Result};
use crate::heads::{pool_image, ImagePrediction, PatchPrediction};
use crate::imaging::{to_gray, RgbImage};
use crate::model::QaModel;
use crate::texture::{select_patches, PatchRef, TextureMeasure};
use crate::training::TrainSample;

/// Patch-grid settings: tile size and how many tiles to keep.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PatchConfig {
    pub sw: u32,
    pub sh: u32,
    pub n: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self { sw: 240, sh: 240, n: 3 }
    }
}

/// Scores the grid of one image and returns the selected top-N refs.
pub fn select_for_image(
    img: &RgbImage,
    patch: PatchConfig,
    measure: &TextureMeasure,
) -> Result<Vec<PatchRef>> {
    let gray = to_gray(img);
    select_patches(&gray, patch.sw, patch.sh, patch.n, measure)
}

/// Crops the selected patches and fits each to the extractor input size.
pub fn extract_adapted_patches(
    img: &RgbImage,
    refs: &[PatchRef],
    input_size: u32,
) -> Result<Vec<RgbImage>> {
    refs.iter()
        .map(|r| adapt_patch(&img.crop(r.x0, r.y0, r.sw, r.sh)?, input_size))
        .collect()
}

fn patches_for_image(
    img: &RgbImage,
    patch: PatchConfig,
    measure: &TextureMeasure,
    input_size: u32,
) -> Result<Vec<RgbImage>> {
    let refs = select_for_image(img, patch, measure)?;
    extract_adapted_patches(img, &refs, input_size)
}

/// Training samples for one manifest entry: one sample for an image, one
/// per sampled frame for a frame directory (label and MOS inherited).
pub fn prepare_samples(
    entry: &ManifestEntry,
    manifest_dir: &Path,
    patch: PatchConfig,
    measure: &TextureMeasure,
    input_size: u32,
    frame_interval: f64,
    normalize_mos: impl Fn(f64) -> f64,
) -> Result<Vec<TrainSample>> {
    let label = match entry.label {
        Label::True4k => 1.0,
        Label::Pseudo4k => 0.0,
        Label::Unlabeled => 0.0,
    };
    let q_mos = normalize_mos(entry.mos);
    let media = entry.resolve(manifest_dir);
    match entry.media_kind {
        MediaKind::Image => {
            let img = RgbImage::load(&media)?;
            Ok(vec![TrainSample {
                id: entry.media_path.clone(),
                patches: patches_for_image(&img, patch, measure, input_size)?,
                y_label: label,
                q_mos,
            }])
        }
        MediaKind::FrameDir => {
            let frames = sample_frames(&media, frame_interval)?;
            frames
                .iter()
                .enumerate()
                .map(|(i, frame)| {
                    let img = RgbImage::load(frame)?;
                    Ok(TrainSample {
                        id: format!("{}#{}", entry.media_path, i),
                        patches: patches_for_image(&img, patch, measure, input_size)?,
                        y_label: label,
                        q_mos,
                    })
                })
                .collect()
        }
    }
}

/// Prepares training samples for many entries in parallel, preserving
/// manifest order.
pub fn prepare_all(
    entries: &[&ManifestEntry],
    manifest_dir: &Path,
    patch: PatchConfig,
    measure: &TextureMeasure,
    input_size: u32,
    frame_interval: f64,
    normalize_mos: impl Fn(f64) -> f64 + Sync,
) -> Result<Vec<TrainSample>> {
    let nested: Vec<Result<Vec<TrainSample>>> = entries
        .par_iter()
        .map(|entry| {
            prepare_samples(
                entry,
                manifest_dir,
                patch,
                measure,
                input_size,
                frame_interval,
                &normalize_mos,
            )
        })
        .collect();
    let mut samples = Vec::new();
    for group in nested {
        samples.extend(group?);
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput("no usable samples in the manifest".into()));
    }
    Ok(samples)
}

/// Pooled prediction of one media item plus the patch/frame bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediaScore {
    pub prediction: ImagePrediction,
    pub frames: usize,
    pub patches_used: usize,
}

/// Runs selection, feature extraction, heads and pooling for one media
/// item; frame directories get the per-frame pipeline followed by temporal
/// average pooling.
pub fn predict_entry(
    model: &QaModel,
    entry: &ManifestEntry,
    manifest_dir: &Path,
    patch: PatchConfig,
    measure: &TextureMeasure,
    frame_interval: f64,
) -> Result<MediaScore> {
    let input_size = model.backbone.spec.input_size;
    let media = entry.resolve(manifest_dir);
    match entry.media_kind {
        MediaKind::Image => {
            let img = RgbImage::load(&media)?;
            let patches = patches_for_image(&img, patch, measure, input_size)?;
            let prediction = model.predict_pooled(&patches)?;
            Ok(MediaScore { prediction, frames: 1, patches_used: prediction.n_patches })
        }
        MediaKind::FrameDir => {
            let frames = sample_frames(&media, frame_interval)?;
            let mut per_frame: Vec<ImagePrediction> = Vec::with_capacity(frames.len());
            let mut patches_used = 0;
            for frame in &frames {
                let img = RgbImage::load(frame)?;
                let patches = patches_for_image(&img, patch, measure, input_size)?;
                let p = model.predict_pooled(&patches)?;
                patches_used += p.n_patches;
                per_frame.push(p);
            }
            // temporal average pooling of the frame-level results
            let frame_preds: Vec<PatchPrediction> = per_frame
                .iter()
                .map(|p| PatchPrediction { y: p.y_pred, q: p.q_score })
                .collect();
            let pooled = pool_image(&frame_preds)?;
            Ok(MediaScore {
                prediction: ImagePrediction {
                    y_pred: pooled.y_pred,
                    q_score: pooled.q_score,
                    n_patches: patches_used,
                },
                frames: frames.len(),
                patches_used,
            })
        }
    }
}
