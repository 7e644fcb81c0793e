//! Manifest ingestion, scene-disjoint splitting, video-frame sampling, and
//! a synthetic pseudo-4K generator for desk-scale experiments.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{io_err, Error, Result};
use crate::imaging::{read_sidecar_number, resample, ResampleKernel, RgbImage};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    True4k,
    Pseudo4k,
    Unlabeled,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::True4k => "true_4k",
            Label::Pseudo4k => "pseudo_4k",
            Label::Unlabeled => "unlabeled",
        }
    }

    fn parse(s: &str) -> Option<Label> {
        match s {
            "true_4k" => Some(Label::True4k),
            "pseudo_4k" => Some(Label::Pseudo4k),
            "unlabeled" => Some(Label::Unlabeled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Image,
    FrameDir,
}

impl MediaKind {
    pub fn name(self) -> &'static str {
        match self {
            MediaKind::Image => "image",
            MediaKind::FrameDir => "frame_dir",
        }
    }

    fn parse(s: &str) -> Option<MediaKind> {
        match s {
            "image" => Some(MediaKind::Image),
            "frame_dir" => Some(MediaKind::FrameDir),
            _ => None,
        }
    }
}

/// One media item of a dataset manifest. `media_path` is stored as written
/// in the CSV; relative paths are resolved against the manifest directory
/// when the file is opened.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub media_path: String,
    pub scene_id: String,
    pub mos: f64,
    pub mos_range: (f64, f64),
    pub label: Label,
    pub media_kind: MediaKind,
}

impl ManifestEntry {
    fn validate(&self, line: usize) -> Result<()> {
        let (lo, hi) = self.mos_range;
        if !(lo < hi) {
            return Err(Error::ManifestValidation(format!(
                "line {line}: mos range [{lo},{hi}] is empty"
            )));
        }
        if !(self.mos >= lo && self.mos <= hi) {
            return Err(Error::ManifestValidation(format!(
                "line {line}: mos {} outside [{lo},{hi}]",
                self.mos
            )));
        }
        if self.scene_id.is_empty() {
            return Err(Error::ManifestValidation(format!(
                "line {line}: empty scene id"
            )));
        }
        Ok(())
    }

    /// Absolute location of the media, resolving relative paths against the
    /// manifest's directory.
    pub fn resolve(&self, manifest_dir: &Path) -> PathBuf {
        let p = Path::new(&self.media_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_dir.join(p)
        }
    }
}

pub const MANIFEST_HEADER: &str = "media_path,scene_id,mos,mos_lo,mos_hi,label,media_kind";

/// Reads and validates a manifest CSV.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(Error::from)?;

    {
        let headers = reader.headers()?;
        let expect: Vec<&str> = MANIFEST_HEADER.split(',').collect();
        let got: Vec<&str> = headers.iter().collect();
        if got != expect {
            return Err(Error::ManifestParse {
                line: 1,
                reason: format!("header is {got:?}, expected {expect:?}"),
            });
        }
    }

    let mut entries: Vec<ManifestEntry> = Vec::new();
    let mut seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header occupies line 1
        let record = record?;
        let field = |idx: usize, name: &str| -> Result<String> {
            record
                .get(idx)
                .map(str::to_owned)
                .ok_or_else(|| Error::ManifestParse {
                    line,
                    reason: format!("missing field {name}"),
                })
        };
        let num = |idx: usize, name: &str| -> Result<f64> {
            field(idx, name)?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::ManifestParse { line, reason: format!("{name}: {e}") })
        };

        let media_path = field(0, "media_path")?;
        let entry = ManifestEntry {
            media_path: media_path.clone(),
            scene_id: field(1, "scene_id")?,
            mos: num(2, "mos")?,
            mos_range: (num(3, "mos_lo")?, num(4, "mos_hi")?),
            label: Label::parse(field(5, "label")?.trim()).ok_or_else(|| Error::ManifestParse {
                line,
                reason: format!("unknown label {:?}", record.get(5).unwrap_or_default()),
            })?,
            media_kind: MediaKind::parse(field(6, "media_kind")?.trim()).ok_or_else(|| {
                Error::ManifestParse {
                    line,
                    reason: format!("unknown media kind {:?}", record.get(6).unwrap_or_default()),
                }
            })?,
        };
        entry.validate(line)?;
        if let Some(&first) = seen.get(&media_path) {
            return Err(Error::DuplicateMedia { path: media_path, first, second: line });
        }
        seen.insert(media_path, line);
        entries.push(entry);
    }
    Ok(entries)
}

pub fn save_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(MANIFEST_HEADER.split(','))?;
    for e in entries {
        writer.write_record([
            e.media_path.as_str(),
            e.scene_id.as_str(),
            &format!("{}", e.mos),
            &format!("{}", e.mos_range.0),
            &format!("{}", e.mos_range.1),
            e.label.name(),
            e.media_kind.name(),
        ])?;
    }
    writer.flush().map_err(io_err(path.as_ref()))?;
    Ok(())
}

/// One scene-disjoint train/test partition.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_scenes: BTreeSet<String>,
    pub test_scenes: BTreeSet<String>,
    pub trial_index: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// Stable digest of the scene assignment, used to verify that sweep
    /// rows share identical splits.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.trial_index.to_le_bytes());
        for s in &self.train_scenes {
            hasher.update(b"T");
            hasher.update(s.as_bytes());
        }
        for s in &self.test_scenes {
            hasher.update(b"E");
            hasher.update(s.as_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn train_entries<'a>(&self, entries: &'a [ManifestEntry]) -> Vec<&'a ManifestEntry> {
        entries
            .iter()
            .filter(|e| self.train_scenes.contains(&e.scene_id))
            .collect()
    }

    pub fn test_entries<'a>(&self, entries: &'a [ManifestEntry]) -> Vec<&'a ManifestEntry> {
        entries
            .iter()
            .filter(|e| self.test_scenes.contains(&e.scene_id))
            .collect()
    }
}

/// Repeated random scene-disjoint splits; no scene straddles a split and
/// the assignment is a pure function of `(scenes, ratio, trial, seed)`.
pub fn make_scene_splits(
    entries: &[ManifestEntry],
    ratio: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<SplitSpec>> {
    if !(0.0 < ratio && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must be in (0,1), got {ratio}")));
    }
    let scenes: BTreeSet<String> = entries.iter().map(|e| e.scene_id.clone()).collect();
    if scenes.len() < 2 {
        return Err(Error::SplitImpossible(format!(
            "need at least 2 distinct scenes, found {}",
            scenes.len()
        )));
    }
    let universe: Vec<String> = scenes.into_iter().collect();
    let n_train = ((universe.len() as f64 * ratio).round() as usize).clamp(1, universe.len() - 1);

    let mut splits = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut shuffled = universe.clone();
        let mut rng = ChaCha20Rng::seed_from_u64(seeding::derive(seed, trial as u64));
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut rng);
        let train_scenes: BTreeSet<String> = shuffled[..n_train].iter().cloned().collect();
        let test_scenes: BTreeSet<String> = shuffled[n_train..].iter().cloned().collect();
        splits.push(SplitSpec { train_scenes, test_scenes, trial_index: trial, seed });
    }
    Ok(splits)
}

/// Frames sampled at a fixed interval from a directory of extracted frames
/// (lexicographic name order) with an `fps.txt` sidecar.
pub fn sample_frames(frame_dir: impl AsRef<Path>, interval: f64) -> Result<Vec<PathBuf>> {
    let dir = frame_dir.as_ref();
    let mut frames: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
                .unwrap_or(false)
        })
        .collect();
    frames.sort();
    if frames.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    let fps = read_sidecar_number(dir.join("fps.txt"))?;
    if !(fps > 0.0) {
        return Err(Error::ManifestValidation(format!(
            "{}: fps must be positive, got {fps}",
            dir.display()
        )));
    }
    let stride = ((fps * interval).round() as usize).max(1);
    Ok(frames.into_iter().step_by(stride).collect())
}

/// Settings of the synthetic pseudo-4K generator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub scenes: usize,
    pub base_size: (u32, u32),
    pub downscale_factors: Vec<u32>,
    pub kernels: Vec<ResampleKernel>,
    /// When non-empty, these (factor, kernel) pairs replace the
    /// factors x kernels cross product.
    pub explicit_variants: Vec<(u32, ResampleKernel)>,
    pub seed: u64,
    /// Proxy MOS scale; pristine images score `hi`.
    pub mos_range: (f64, f64),
    /// Drop applied to pseudo variants: `mos = hi - span * (1 - 1/factor)`.
    pub mos_span: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            scenes: 8,
            base_size: (960, 540),
            downscale_factors: vec![2, 3],
            kernels: vec![ResampleKernel::Bilinear],
            explicit_variants: Vec::new(),
            seed: 0,
            mos_range: (0.0, 100.0),
            mos_span: 40.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scenes < 2 {
            return Err(Error::Config("need at least 2 synthetic scenes".into()));
        }
        let variants = self.variants();
        if variants.is_empty() {
            return Err(Error::Config("need at least one pseudo variant".into()));
        }
        if variants.iter().any(|&(f, _)| f < 2) {
            return Err(Error::Config("downscale factors must be > 1".into()));
        }
        if !(self.mos_range.0 < self.mos_range.1) || self.mos_span <= 0.0 {
            return Err(Error::Config(
                "mos range must be non-empty and span positive".into(),
            ));
        }
        Ok(())
    }

    /// Pseudo variants to render per scene.
    pub fn variants(&self) -> Vec<(u32, ResampleKernel)> {
        if !self.explicit_variants.is_empty() {
            return self.explicit_variants.clone();
        }
        let mut out = Vec::new();
        for &factor in &self.downscale_factors {
            for &kernel in &self.kernels {
                out.push((factor, kernel));
            }
        }
        out
    }

    pub fn pseudo_mos(&self, factor: u32) -> f64 {
        self.mos_range.1 - self.mos_span * (1.0 - 1.0 / factor as f64)
    }
}

/// Bilinearly interpolated lattice noise added onto `canvas`.
fn add_value_noise(
    rng: &mut ChaCha20Rng,
    canvas: &mut [f64],
    w: u32,
    h: u32,
    cell: u32,
    amplitude: f64,
) {
    let gw = (w / cell + 2) as usize;
    let gh = (h / cell + 2) as usize;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for y in 0..h as usize {
        let fy = y as f64 / cell as f64;
        let gy = fy as usize;
        let ty = fy - gy as f64;
        for x in 0..w as usize {
            let fx = x as f64 / cell as f64;
            let gx = fx as usize;
            let tx = fx - gx as f64;
            let v00 = lattice[gy * gw + gx];
            let v01 = lattice[gy * gw + gx + 1];
            let v10 = lattice[(gy + 1) * gw + gx];
            let v11 = lattice[(gy + 1) * gw + gx + 1];
            let top = v00 + (v01 - v00) * tx;
            let bottom = v10 + (v11 - v10) * tx;
            canvas[y * w as usize + x] += amplitude * (top + (bottom - top) * ty);
        }
    }
}

/// Renders one procedurally textured scene: noise octaves over a gradient,
/// fine grain everywhere, plus text-like stroke rows and checker stamps so
/// several tiles carry dense high-frequency texture.
pub fn render_scene(width: u32, height: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (w, h) = (width as usize, height as usize);
    let mut luma = vec![0.0f64; w * h];

    // smooth base: gradient + coarse-to-mid octaves
    let gx = rng.gen_range(-40.0..40.0);
    let gy = rng.gen_range(-40.0..40.0);
    for y in 0..h {
        for x in 0..w {
            luma[y * w + x] += gx * (x as f64 / w as f64 - 0.5) + gy * (y as f64 / h as f64 - 0.5);
        }
    }
    // the octave ladder spans coarse structure down to near-pixel scale;
    // the fine cells are what the 2x and 3x round trips erase to
    // different degrees
    for (cell, amp) in [(160, 36.0), (64, 24.0), (24, 14.0), (12, 12.0), (8, 10.0), (4, 10.0)] {
        add_value_noise(&mut rng, &mut luma, width, height, cell, amp);
    }

    // normalize the structural base to a fixed mean and spread: scenes
    // stay individually varied but statistically comparable, and nothing
    // drifts into the 0/255 clip zones where grain (the pristine/pseudo
    // discriminator) would be destroyed
    let n = luma.len() as f64;
    let mean = luma.iter().sum::<f64>() / n;
    let std = (luma.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
        .sqrt()
        .max(1e-9);
    for v in luma.iter_mut() {
        *v = 128.0 + (*v - mean) / std * 22.0;
    }

    // text-like stroke rows
    let lines = 6;
    for _ in 0..lines {
        let base_y = rng.gen_range(0..h.saturating_sub(16).max(1));
        let stroke_h = rng.gen_range(6..14).min(h - base_y);
        let tone: f64 = if rng.gen_bool(0.5) { -55.0 } else { 55.0 };
        let mut x = rng.gen_range(0..w / 4);
        while x + 4 < w {
            let glyph_w = rng.gen_range(3..12);
            let gap = rng.gen_range(2..8);
            if rng.gen_bool(0.8) {
                for yy in base_y..base_y + stroke_h {
                    for xx in x..(x + glyph_w).min(w) {
                        luma[yy * w + xx] += tone * rng.gen_range(0.6..1.0);
                    }
                }
            }
            x += glyph_w + gap;
        }
    }

    // checker stamps: texture islands with graded cell sizes, so finer
    // cells vanish at lower downscale factors than coarser ones
    for cell in [1usize, 2, 3, 4] {
        let size = rng.gen_range(40..64);
        let x0 = rng.gen_range(0..w.saturating_sub(size).max(1));
        let y0 = rng.gen_range(0..h.saturating_sub(size).max(1));
        for yy in 0..size.min(h - y0) {
            for xx in 0..size.min(w - x0) {
                let on = ((xx / cell) + (yy / cell)) % 2 == 0;
                luma[(y0 + yy) * w + x0 + xx] = if on { 210.0 } else { 45.0 };
            }
        }
    }

    // fine grain: dense pixel-level texture the resampling round trip kills
    for v in luma.iter_mut() {
        *v += rng.gen_range(-12.0..12.0);
    }

    // mild per-channel tints keep the RGB planes distinct but correlated
    let tint = [
        rng.gen_range(-8.0..8.0),
        rng.gen_range(-8.0..8.0),
        rng.gen_range(-8.0..8.0),
    ];
    let mut data = Vec::with_capacity(w * h * 3);
    for &v in &luma {
        for t in tint {
            data.push((v + t).clamp(0.0, 255.0) as u8);
        }
    }
    RgbImage::new(width, height, data).expect("generator produces a valid buffer")
}

/// Renders the synthetic scenes, writes `scene_<k>/{pristine.png,
/// f<factor>_<kernel>.png}` plus `manifest.csv` under `out_dir`, and
/// returns the manifest entries (paths relative to `out_dir`).
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<ManifestEntry>> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let (lo, hi) = spec.mos_range;
    let per_scene: Vec<Result<Vec<ManifestEntry>>> = (0..spec.scenes)
        .into_par_iter()
        .map(|scene| {
            let scene_id = format!("scene_{scene}");
            let scene_dir = out_dir.join(&scene_id);
            std::fs::create_dir_all(&scene_dir).map_err(io_err(&scene_dir))?;
            let pristine = render_scene(
                spec.base_size.0,
                spec.base_size.1,
                seeding::derive(spec.seed, scene as u64),
            );
            let mut entries = Vec::new();

            let pristine_rel = format!("{scene_id}/pristine.png");
            pristine.save_png(out_dir.join(&pristine_rel))?;
            entries.push(ManifestEntry {
                media_path: pristine_rel,
                scene_id: scene_id.clone(),
                mos: hi,
                mos_range: (lo, hi),
                label: Label::True4k,
                media_kind: MediaKind::Image,
            });

            for (factor, kernel) in spec.variants() {
                let (w, h) = spec.base_size;
                let down = resample(&pristine, (w / factor).max(1), (h / factor).max(1), kernel)?;
                let up = resample(&down, w, h, kernel)?;
                let rel = format!("{scene_id}/f{factor}_{}.png", kernel.name());
                up.save_png(out_dir.join(&rel))?;
                entries.push(ManifestEntry {
                    media_path: rel,
                    scene_id: scene_id.clone(),
                    mos: spec.pseudo_mos(factor).clamp(lo, hi),
                    mos_range: (lo, hi),
                    label: Label::Pseudo4k,
                    media_kind: MediaKind::Image,
                });
            }
            Ok(entries)
        })
        .collect();

    let mut entries = Vec::new();
    for scene_entries in per_scene {
        entries.extend(scene_entries?);
    }
    save_manifest(out_dir.join("manifest.csv"), &entries)?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::to_gray;
    use crate::texture::{select_patches, TextureMeasure};

    fn write_manifest(dir: &Path, rows: &[&str]) -> PathBuf {
        let path = dir.join("manifest.csv");
        let mut text = String::from(MANIFEST_HEADER);
        for r in rows {
            text.push('\n');
            text.push_str(r);
        }
        text.push('\n');
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn loads_well_formed_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(
            dir.path(),
            &[
                "a.png,s1,80,0,100,true_4k,image",
                "b.png,s1,60,0,100,pseudo_4k,image",
                "frames/c,s2,3.5,0,5,unlabeled,frame_dir",
            ],
        );
        let entries = load_manifest(&path).unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[0].label, Label::True4k);
        assert_eq!(entries[2].media_kind, MediaKind::FrameDir);
        assert_eq!(entries[2].mos_range, (0.0, 5.0));
    }

    #[test]
    fn rejects_out_of_range_mos() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), &["a.png,s1,120,0,100,true_4k,image"]);
        assert!(matches!(
            load_manifest(&path),
            Err(Error::ManifestValidation(_))
        ));
    }

    #[test]
    fn rejects_duplicates_with_both_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(
            dir.path(),
            &[
                "a.png,s1,80,0,100,true_4k,image",
                "b.png,s1,70,0,100,true_4k,image",
                "a.png,s2,60,0,100,pseudo_4k,image",
            ],
        );
        match load_manifest(&path) {
            Err(Error::DuplicateMedia { path, first, second }) => {
                assert_eq!(path, "a.png");
                assert_eq!((first, second), (2, 4));
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(
            dir.path(),
            &[
                "a.png,s1,80,0,100,true_4k,image",
                "b.png,s1,not_a_number,0,100,true_4k,image",
            ],
        );
        match load_manifest(&path) {
            Err(Error::ManifestParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    fn entries_for_scenes(n: usize) -> Vec<ManifestEntry> {
        (0..n)
            .flat_map(|s| {
                (0..2).map(move |v| ManifestEntry {
                    media_path: format!("s{s}_v{v}.png"),
                    scene_id: format!("scene_{s}"),
                    mos: 50.0,
                    mos_range: (0.0, 100.0),
                    label: Label::True4k,
                    media_kind: MediaKind::Image,
                })
            })
            .collect()
    }

    #[test]
    fn splits_are_exact_disjoint_and_deterministic() {
        let entries = entries_for_scenes(10);
        let splits = make_scene_splits(&entries, 0.8, 10, 7).unwrap();
        assert_eq!(splits.len(), 10);
        for s in &splits {
            assert_eq!(s.train_scenes.len(), 8);
            assert_eq!(s.test_scenes.len(), 2);
            assert!(s.train_scenes.is_disjoint(&s.test_scenes));
            // every entry of a test scene stays out of the train side
            for e in s.test_entries(&entries) {
                assert!(!s.train_scenes.contains(&e.scene_id));
            }
        }
        let again = make_scene_splits(&entries, 0.8, 10, 7).unwrap();
        assert_eq!(splits, again);
        assert_eq!(splits[0].fingerprint(), again[0].fingerprint());

        let other_seed = make_scene_splits(&entries, 0.8, 10, 8).unwrap();
        assert_ne!(splits, other_seed);
    }

    #[test]
    fn single_scene_cannot_split() {
        let entries = entries_for_scenes(1);
        assert!(matches!(
            make_scene_splits(&entries, 0.8, 3, 0),
            Err(Error::SplitImpossible(_))
        ));
    }

    #[test]
    fn frame_sampling_strides_by_half_second() {
        let dir = tempfile::tempdir().unwrap();
        // 5 seconds at 30 fps
        for i in 0..150 {
            let img = RgbImage::filled(4, 4, [i as u8, 0, 0]);
            img.save_png(dir.path().join(format!("frame_{i:06}.png"))).unwrap();
        }
        std::fs::write(dir.path().join("fps.txt"), "30\n").unwrap();
        let frames = sample_frames(dir.path(), 0.5).unwrap();
        assert_eq!(frames.len(), 10);
        assert!(frames[0].ends_with("frame_000000.png"));
        assert!(frames[1].ends_with("frame_000015.png"));
        assert!(frames[9].ends_with("frame_000135.png"));
    }

    #[test]
    fn single_frame_video_samples_itself() {
        let dir = tempfile::tempdir().unwrap();
        RgbImage::filled(4, 4, [1, 2, 3])
            .save_png(dir.path().join("only.png"))
            .unwrap();
        std::fs::write(dir.path().join("fps.txt"), "24").unwrap();
        let frames = sample_frames(dir.path(), 0.5).unwrap();
        assert_eq!(frames.len(), 1);
    }

    #[test]
    fn empty_frame_dir_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            sample_frames(dir.path(), 0.5),
            Err(Error::NoFrames(_))
        ));
    }

    #[test]
    fn synthetic_generation_counts_mos_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            scenes: 2,
            base_size: (320, 180),
            downscale_factors: vec![2],
            kernels: vec![ResampleKernel::Bilinear],
            seed: 3,
            ..SyntheticSpec::default()
        };
        let entries = generate_synthetic(&spec, dir.path()).unwrap();
        assert_eq!(entries.len(), 4); // 2 scenes x (1 pristine + 1 pseudo)
        let trues = entries.iter().filter(|e| e.label == Label::True4k).count();
        assert_eq!(trues, 2);

        // proxy MOS ordering: pristine above every pseudo variant
        for scene in ["scene_0", "scene_1"] {
            let scene_entries: Vec<_> = entries.iter().filter(|e| e.scene_id == scene).collect();
            let pristine = scene_entries.iter().find(|e| e.label == Label::True4k).unwrap();
            for e in &scene_entries {
                if e.label == Label::Pseudo4k {
                    assert!(e.mos < pristine.mos);
                }
            }
        }

        // round trip through the CSV
        let loaded = load_manifest(dir.path().join("manifest.csv")).unwrap();
        assert_eq!(loaded, entries);
    }

    #[test]
    fn pseudo_mos_strictly_decreases_with_factor() {
        let spec = SyntheticSpec::default();
        assert!(spec.pseudo_mos(2) > spec.pseudo_mos(3));
        assert!(spec.pseudo_mos(3) > spec.pseudo_mos(4));
        assert!(spec.pseudo_mos(2) < spec.mos_range.1);
    }

    #[test]
    fn pseudo_loses_top_tile_contrast() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            scenes: 2,
            base_size: (480, 270),
            downscale_factors: vec![2, 3],
            kernels: vec![ResampleKernel::Bilinear, ResampleKernel::Nearest],
            seed: 11,
            ..SyntheticSpec::default()
        };
        let entries = generate_synthetic(&spec, dir.path()).unwrap();
        let measure = TextureMeasure::default();
        let top3 = |path: &Path| -> f64 {
            let img = RgbImage::load(path).unwrap();
            let gray = to_gray(&img);
            let top = select_patches(&gray, 120, 120, 3, &measure).unwrap();
            top.iter().map(|r| r.score).sum::<f64>() / 3.0
        };
        for scene in ["scene_0", "scene_1"] {
            let pristine = top3(&dir.path().join(scene).join("pristine.png"));
            for e in entries
                .iter()
                .filter(|e| e.scene_id == scene && e.label == Label::Pseudo4k)
            {
                let pseudo = top3(&e.resolve(dir.path()));
                assert!(
                    pseudo < pristine,
                    "{}: pseudo contrast {pseudo} not below pristine {pristine}",
                    e.media_path
                );
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            scenes: 2,
            base_size: (160, 90),
            downscale_factors: vec![2],
            kernels: vec![ResampleKernel::Nearest],
            seed: 5,
            ..SyntheticSpec::default()
        };
        generate_synthetic(&spec, dir_a.path()).unwrap();
        generate_synthetic(&spec, dir_b.path()).unwrap();
        let a = std::fs::read(dir_a.path().join("scene_1/pristine.png")).unwrap();
        let b = std::fs::read(dir_b.path().join("scene_1/pristine.png")).unwrap();
        assert_eq!(a, b);
    }
}
