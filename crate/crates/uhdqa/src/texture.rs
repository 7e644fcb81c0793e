//! Texture complexity measures and top-N patch selection.
//!
//! The primary measure is the contrast of the grey-level co-occurrence
//! matrix (GLCM); variance, local variance, gray-difference entropy and a
//! seeded random baseline are available for comparison runs.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::seeding;

/// How GLCM counts are turned into the matrix entries.
///
/// `ImageArea` divides by `W*H` regardless of how many offset pairs are in
/// bounds; `ValidPairs` divides by the in-bounds pair count so entries sum
/// to one. For equal-size patches the two differ by a common positive
/// constant, so patch rankings are identical under either choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlcmNormalization {
    ImageArea,
    ValidPairs,
}

/// Offset and quantization settings for one co-occurrence matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GlcmConfig {
    pub dx: i32,
    pub dy: i32,
    /// Number of gray levels; 256 keeps the full 8-bit range, fewer levels
    /// quantize `g -> g * levels / 256` for speed.
    pub levels: usize,
    pub normalize_by: GlcmNormalization,
}

impl Default for GlcmConfig {
    fn default() -> Self {
        Self {
            dx: 1,
            dy: 0,
            levels: 256,
            normalize_by: GlcmNormalization::ImageArea,
        }
    }
}

impl GlcmConfig {
    pub fn with_offset(dx: i32, dy: i32) -> Self {
        Self { dx, dy, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dx == 0 && self.dy == 0 {
            return Err(Error::Config("GLCM offset must be non-zero".into()));
        }
        if !(2..=256).contains(&self.levels) {
            return Err(Error::Config(format!(
                "GLCM levels must be in 2..=256, got {}",
                self.levels
            )));
        }
        Ok(())
    }
}

/// Normalized co-occurrence counts for one offset.
#[derive(Debug, Clone)]
pub struct GlcmMatrix {
    levels: usize,
    values: Vec<f64>,
}

impl GlcmMatrix {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.levels + l]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One tile of the non-overlapping patch grid with its texture score.
///
/// `score` is zero until a scoring pass fills it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PatchRef {
    pub index: usize,
    pub x0: u32,
    pub y0: u32,
    pub sw: u32,
    pub sh: u32,
    pub score: f64,
}

/// Texture complexity function `t = F(patch)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextureMeasure {
    /// Contrast of the GLCM; `four_offsets` averages over
    /// {(1,0),(0,1),(1,1),(1,-1)} instead of the configured single offset.
    GlcmContrast { cfg: GlcmConfig, four_offsets: bool },
    /// Population variance of the gray values.
    Variance,
    /// Mean of per-block population variances over non-overlapping
    /// `block x block` tiles.
    LocalVariance { block: u32 },
    /// Shannon entropy (natural log) of the |gray difference| histogram at
    /// the given offset.
    GrayDiffEntropy { dx: i32, dy: i32 },
    /// Uniform draw in [0,1) from a seeded generator; the selection baseline.
    Random { seed: u64 },
}

impl Default for TextureMeasure {
    fn default() -> Self {
        TextureMeasure::GlcmContrast {
            cfg: GlcmConfig::default(),
            four_offsets: false,
        }
    }
}

impl TextureMeasure {
    pub fn kind_name(&self) -> &'static str {
        match self {
            TextureMeasure::GlcmContrast { .. } => "glcm_contrast",
            TextureMeasure::Variance => "variance",
            TextureMeasure::LocalVariance { .. } => "local_variance",
            TextureMeasure::GrayDiffEntropy { .. } => "gray_diff_entropy",
            TextureMeasure::Random { .. } => "random",
        }
    }

    /// The five comparison measures with their default parameters.
    pub fn comparison_set(seed: u64) -> Vec<TextureMeasure> {
        vec![
            TextureMeasure::default(),
            TextureMeasure::Variance,
            TextureMeasure::LocalVariance { block: 8 },
            TextureMeasure::GrayDiffEntropy { dx: 1, dy: 0 },
            TextureMeasure::Random { seed },
        ]
    }

    /// Rebinds per-tile state (the random measure's seed) so concurrent tile
    /// scoring stays deterministic.
    fn for_tile(&self, tile_index: usize) -> TextureMeasure {
        match self {
            TextureMeasure::Random { seed } => TextureMeasure::Random {
                seed: seeding::derive(*seed, tile_index as u64),
            },
            other => other.clone(),
        }
    }
}

/// Counts gray-pair co-occurrences at the configured offset.
///
/// `GLCM(k,l)` is the number of in-bounds pixel pairs with `I(x,y)=k` and
/// `I(x+dx, y+dy)=l`, divided by `W*H` or by the in-bounds pair count
/// depending on the normalization.
pub fn compute_glcm(img: &GrayImage, cfg: &GlcmConfig) -> Result<GlcmMatrix> {
    cfg.validate()?;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (dx, dy) = (cfg.dx as i64, cfg.dy as i64);
    if dx.unsigned_abs() as i64 >= w || dy.unsigned_abs() as i64 >= h {
        return Err(Error::DegenerateInput(format!(
            "image {w}x{h} too small for GLCM offset ({},{})",
            cfg.dx, cfg.dy
        )));
    }

    let levels = cfg.levels;
    let mut counts = vec![0u64; levels * levels];
    let data = img.data();
    let x_range = if dx >= 0 { 0..w - dx } else { -dx..w };
    let y_range = if dy >= 0 { 0..h - dy } else { -dy..h };
    let mut pairs = 0u64;
    for y in y_range {
        let row = (y * w) as usize;
        let nrow = ((y + dy) * w) as usize;
        for x in x_range.clone() {
            let k = quantize(data[row + x as usize], levels);
            let l = quantize(data[nrow + (x + dx) as usize], levels);
            counts[k * levels + l] += 1;
            pairs += 1;
        }
    }

    let denom = match cfg.normalize_by {
        GlcmNormalization::ImageArea => (w * h) as f64,
        GlcmNormalization::ValidPairs => pairs as f64,
    };
    let values = counts.iter().map(|&c| c as f64 / denom).collect();
    Ok(GlcmMatrix { levels, values })
}

#[inline]
fn quantize(g: u8, levels: usize) -> usize {
    g as usize * levels / 256
}

/// `sum_k sum_l (k-l)^2 GLCM(k,l)`.
pub fn glcm_contrast(glcm: &GlcmMatrix) -> f64 {
    let n = glcm.levels;
    let mut total = 0.0;
    for k in 0..n {
        let row = &glcm.values[k * n..(k + 1) * n];
        for (l, &v) in row.iter().enumerate() {
            if v != 0.0 {
                let d = k as f64 - l as f64;
                total += d * d * v;
            }
        }
    }
    total
}

/// Applies one texture measure to a patch.
pub fn measure_texture(patch: &GrayImage, m: &TextureMeasure) -> Result<f64> {
    match m {
        TextureMeasure::GlcmContrast { cfg, four_offsets } => {
            if *four_offsets {
                let mut total = 0.0;
                for (dx, dy) in [(1, 0), (0, 1), (1, 1), (1, -1)] {
                    let c = GlcmConfig { dx, dy, ..*cfg };
                    total += glcm_contrast(&compute_glcm(patch, &c)?);
                }
                Ok(total / 4.0)
            } else {
                Ok(glcm_contrast(&compute_glcm(patch, cfg)?))
            }
        }
        TextureMeasure::Variance => Ok(population_variance(patch.data())),
        TextureMeasure::LocalVariance { block } => local_variance(patch, *block),
        TextureMeasure::GrayDiffEntropy { dx, dy } => gray_diff_entropy(patch, *dx, *dy),
        TextureMeasure::Random { seed } => {
            let mut rng = ChaCha20Rng::seed_from_u64(*seed);
            Ok(rng.gen::<f64>())
        }
    }
}

fn population_variance(values: &[u8]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n
}

fn local_variance(patch: &GrayImage, block: u32) -> Result<f64> {
    if block == 0 {
        return Err(Error::Config("local variance block size must be >= 1".into()));
    }
    if patch.width() < block || patch.height() < block {
        return Err(Error::DegenerateInput(format!(
            "patch {}x{} smaller than {block}x{block} block",
            patch.width(),
            patch.height()
        )));
    }
    let cols = patch.width() / block;
    let rows = patch.height() / block;
    let mut total = 0.0;
    for by in 0..rows {
        for bx in 0..cols {
            let blk = patch.crop(bx * block, by * block, block, block)?;
            total += population_variance(blk.data());
        }
    }
    Ok(total / (rows * cols) as f64)
}

fn gray_diff_entropy(patch: &GrayImage, dx: i32, dy: i32) -> Result<f64> {
    if dx == 0 && dy == 0 {
        return Err(Error::Config("gray-difference offset must be non-zero".into()));
    }
    let (w, h) = (patch.width() as i64, patch.height() as i64);
    let (dx, dy) = (dx as i64, dy as i64);
    if dx.unsigned_abs() as i64 >= w || dy.unsigned_abs() as i64 >= h {
        return Err(Error::DegenerateInput(format!(
            "patch {w}x{h} too small for offset ({dx},{dy})"
        )));
    }
    let data = patch.data();
    let mut hist = [0u64; 256];
    let mut pairs = 0u64;
    let x_range = if dx >= 0 { 0..w - dx } else { -dx..w };
    let y_range = if dy >= 0 { 0..h - dy } else { -dy..h };
    for y in y_range {
        let row = (y * w) as usize;
        let nrow = ((y + dy) * w) as usize;
        for x in x_range.clone() {
            let a = data[row + x as usize] as i32;
            let b = data[nrow + (x + dx) as usize] as i32;
            hist[(a - b).unsigned_abs() as usize] += 1;
            pairs += 1;
        }
    }
    let n = pairs as f64;
    let mut entropy = 0.0;
    for &c in hist.iter() {
        if c > 0 {
            let p = c as f64 / n;
            entropy -= p * p.ln();
        }
    }
    Ok(entropy)
}

/// Non-overlapping tile grid in row-major order; right/bottom remainders
/// are discarded.
pub fn tile_grid(width: u32, height: u32, sw: u32, sh: u32) -> Result<Vec<PatchRef>> {
    if sw == 0 || sh == 0 {
        return Err(Error::Config("patch dimensions must be >= 1".into()));
    }
    if sw > width || sh > height {
        return Err(Error::DegenerateInput(format!(
            "patch {sw}x{sh} larger than image {width}x{height}"
        )));
    }
    let cols = (width / sw) as usize;
    let rows = (height / sh) as usize;
    let mut refs = Vec::with_capacity(cols * rows);
    for index in 0..cols * rows {
        refs.push(PatchRef {
            index,
            x0: (index % cols) as u32 * sw,
            y0: (index / cols) as u32 * sh,
            sw,
            sh,
            score: 0.0,
        });
    }
    Ok(refs)
}

/// Scores every tile of the grid under the measure; output in grid order.
pub fn score_tiles(
    img: &GrayImage,
    sw: u32,
    sh: u32,
    m: &TextureMeasure,
) -> Result<Vec<PatchRef>> {
    let refs = tile_grid(img.width(), img.height(), sw, sh)?;
    refs.into_par_iter()
        .map(|mut r| {
            let patch = img.crop(r.x0, r.y0, r.sw, r.sh)?;
            r.score = measure_texture(&patch, &m.for_tile(r.index))?;
            Ok(r)
        })
        .collect()
}

/// Ranks scored tiles by descending score, ties broken by ascending grid
/// index, and keeps the first `n`.
pub fn rank_patches(mut scored: Vec<PatchRef>, n: usize) -> Result<Vec<PatchRef>> {
    if n > scored.len() {
        return Err(Error::InsufficientPatches {
            requested: n,
            available: scored.len(),
        });
    }
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.index.cmp(&b.index))
    });
    scored.truncate(n);
    Ok(scored)
}

/// Top-N textured patches of an image.
pub fn select_patches(
    img: &GrayImage,
    sw: u32,
    sh: u32,
    n: usize,
    m: &TextureMeasure,
) -> Result<Vec<PatchRef>> {
    rank_patches(score_tiles(img, sw, sh, m)?, n)
}

/// Writes `index,x0,y0,sw,sh,score` rows, score with 6 decimal places.
pub fn write_patch_csv<W: Write>(mut w: W, refs: &[PatchRef]) -> std::io::Result<()> {
    writeln!(w, "index,x0,y0,sw,sh,score")?;
    for r in refs {
        writeln!(
            w,
            "{},{},{},{},{},{:.6}",
            r.index, r.x0, r.y0, r.sw, r.sh, r.score
        )?;
    }
    Ok(())
}
