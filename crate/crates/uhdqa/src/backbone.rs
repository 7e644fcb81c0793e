//! Staged convolutional feature extractor: a stem plus four strided stages,
//! each tapped for the fused quality-aware feature vector.
//!
//! The extractor is a contract rather than a fixed network: any stage-width
//! declaration plugs in, weights load from an archive or initialize from a
//! seed, and stage masking selects which taps enter the fused feature.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::imaging::{resample, ResampleKernel, RgbImage};
use crate::nn::{global_average_pool, relu_map, Conv2d, FeatureMap, GradStore};
use crate::store;

/// Per-channel input normalization applied before the stem. Pretrained
/// features are meaningless without the statistics they were trained with,
/// so this travels with the weights.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InputNormalization {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for InputNormalization {
    fn default() -> Self {
        // maps 8-bit input to roughly [-1, 1]
        Self { mean: [0.5; 3], std: [0.5; 3] }
    }
}

/// Where the extractor weights come from.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsSource {
    PretrainedFile(PathBuf),
    Random { seed: u64 },
}

/// Declaration of a pluggable 5-stage extractor (stem + stages 1-4).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BackboneSpec {
    pub name: String,
    /// Channels of the four tapped stage outputs.
    pub stage_channels: [usize; 4],
    pub weights_source: WeightsSource,
    /// Square patch side the network accepts.
    pub input_size: u32,
    pub normalization: InputNormalization,
}

impl BackboneSpec {
    /// Default family: stage widths 64/128/256/512 fusing to 960 dims.
    pub fn standard(weights_source: WeightsSource) -> Self {
        Self {
            name: "std5".into(),
            stage_channels: [64, 128, 256, 512],
            weights_source,
            input_size: 240,
            normalization: InputNormalization::default(),
        }
    }

    /// Small extractor for fast experiments and tests.
    pub fn tiny(seed: u64) -> Self {
        Self {
            name: "tiny5".into(),
            stage_channels: [8, 16, 32, 64],
            weights_source: WeightsSource::Random { seed },
            input_size: 96,
            normalization: InputNormalization::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.iter().any(|&c| c == 0) {
            return Err(Error::Config("stage channels must be positive".into()));
        }
        // stage 4 halves the input five times; anything smaller leaves no
        // spatial support to pool
        if self.input_size < 32 {
            return Err(Error::Config(format!(
                "input size {} too small for a 5-stage extractor (min 32)",
                self.input_size
            )));
        }
        Ok(())
    }

    pub fn fused_len(&self, stage_mask: [bool; 4]) -> usize {
        self.stage_channels
            .iter()
            .zip(stage_mask)
            .filter(|(_, on)| *on)
            .map(|(c, _)| *c)
            .sum()
    }
}

/// Published stage widths of common extractor families, for declaring
/// comparison configurations without implementing the networks.
pub fn declared_stage_channels(family: &str) -> Option<[usize; 4]> {
    match family {
        "std5" | "resnet18" | "resnet34" => Some([64, 128, 256, 512]),
        "resnet50" | "resnext50" | "resnet101" => Some([256, 512, 1024, 2048]),
        "tiny5" => Some([8, 16, 32, 64]),
        _ => None,
    }
}

/// Feature maps tapped after stages 1-4.
#[derive(Debug, Clone)]
pub struct StageFeatures {
    pub maps: [FeatureMap; 4],
}

/// Fused quality-aware feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityFeature {
    pub vector: Vec<f64>,
    pub stage_mask: [bool; 4],
}

/// The named stage-mask variants of the fusion comparison: the plain
/// final-stage baseline and the leave-one-out / full fusions.
pub fn stage_mask_variants() -> [(&'static str, [bool; 4]); 5] {
    [
        ("BL", [false, false, false, true]),
        ("BL_234", [false, true, true, true]),
        ("BL_134", [true, false, true, true]),
        ("BL_124", [true, true, false, true]),
        ("BL_all", [true, true, true, true]),
    ]
}

/// Intermediate activations kept for the backward pass.
pub struct BackboneTrace {
    pub input: FeatureMap,
    pub stem_out: FeatureMap,
    /// Post-ReLU stage outputs; these are the tapped maps F1..F4.
    pub stage_outs: [FeatureMap; 4],
}

/// Live extractor: stem conv plus four stage convs, all 3x3 stride 2 with
/// ReLU, so stage `i` has spatial extent `input_size / 2^(i+1)`.
pub struct Backbone {
    pub spec: BackboneSpec,
    pub stem: Conv2d,
    pub stages: [Conv2d; 4],
}

/// Number of GradStore slots a backbone occupies (5 convs x weight+bias).
pub const BACKBONE_SLOTS: usize = 10;

impl Backbone {
    pub fn from_spec(spec: BackboneSpec) -> Result<Self> {
        spec.validate()?;
        let c = spec.stage_channels;
        let stem = Conv2d::new(3, c[0], 2, 0);
        let stages = [
            Conv2d::new(c[0], c[0], 2, 2),
            Conv2d::new(c[0], c[1], 2, 4),
            Conv2d::new(c[1], c[2], 2, 6),
            Conv2d::new(c[2], c[3], 2, 8),
        ];
        let mut backbone = Self { spec, stem, stages };
        match backbone.spec.weights_source.clone() {
            WeightsSource::Random { seed } => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                backbone.stem.init_he(&mut rng);
                for stage in backbone.stages.iter_mut() {
                    stage.init_he(&mut rng);
                }
            }
            WeightsSource::PretrainedFile(path) => backbone.load_weights(&path)?,
        }
        Ok(backbone)
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        let mut shapes = vec![self.stem.weight.len(), self.stem.bias.len()];
        for s in &self.stages {
            shapes.push(s.weight.len());
            shapes.push(s.bias.len());
        }
        shapes
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["stem.weight".into(), "stem.bias".into()];
        for i in 0..4 {
            names.push(format!("stage{}.weight", i + 1));
            names.push(format!("stage{}.bias", i + 1));
        }
        names
    }

    pub fn param_arrays(&self) -> Vec<&Vec<f64>> {
        let mut out = vec![&self.stem.weight, &self.stem.bias];
        for s in &self.stages {
            out.push(&s.weight);
            out.push(&s.bias);
        }
        out
    }

    pub fn param_arrays_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = vec![&mut self.stem.weight, &mut self.stem.bias];
        for s in self.stages.iter_mut() {
            out.push(&mut s.weight);
            out.push(&mut s.bias);
        }
        out
    }

    /// Converts an input-sized RGB patch to a normalized feature map.
    pub fn patch_to_input(&self, patch: &RgbImage) -> Result<FeatureMap> {
        let s = self.spec.input_size;
        if patch.width() != s || patch.height() != s {
            return Err(Error::Shape(format!(
                "patch {}x{} does not match extractor input {s}x{s}",
                patch.width(),
                patch.height()
            )));
        }
        let norm = &self.spec.normalization;
        let (h, w) = (s as usize, s as usize);
        let mut map = FeatureMap::zeros(3, h, w);
        let data = patch.data();
        for c in 0..3 {
            let plane = &mut map.data[c * h * w..(c + 1) * h * w];
            for (i, v) in plane.iter_mut().enumerate() {
                *v = (data[i * 3 + c] as f64 / 255.0 - norm.mean[c]) / norm.std[c];
            }
        }
        Ok(map)
    }

    /// Full forward pass keeping the activations needed for backward.
    pub fn forward_trace(&self, input: FeatureMap) -> BackboneTrace {
        let stem_out = relu_map(self.stem.forward(&input));
        let s1 = relu_map(self.stages[0].forward(&stem_out));
        let s2 = relu_map(self.stages[1].forward(&s1));
        let s3 = relu_map(self.stages[2].forward(&s2));
        let s4 = relu_map(self.stages[3].forward(&s3));
        BackboneTrace { input, stem_out, stage_outs: [s1, s2, s3, s4] }
    }

    /// Taps the four stage maps for one input-sized patch.
    pub fn extract_stage_maps(&self, patch: &RgbImage) -> Result<StageFeatures> {
        let trace = self.forward_trace(self.patch_to_input(patch)?);
        Ok(StageFeatures { maps: trace.stage_outs })
    }

    /// Backward through the stages given gradients on the post-ReLU stage
    /// outputs (the GAP taps); accumulates parameter gradients.
    pub fn backward(
        &self,
        trace: &BackboneTrace,
        mut stage_grads: [FeatureMap; 4],
        grads: &mut GradStore,
    ) {
        // gradient flowing down from stage i to stage i-1
        let mut flow: Option<FeatureMap> = None;
        for i in (0..4).rev() {
            let mut g = stage_grads[i].clone();
            if let Some(f) = flow.take() {
                for (a, b) in g.data.iter_mut().zip(&f.data) {
                    *a += b;
                }
            }
            crate::nn::relu_mask_map(&mut g, &trace.stage_outs[i]);
            let below = if i == 0 { &trace.stem_out } else { &trace.stage_outs[i - 1] };
            flow = Some(self.stages[i].backward(below, &g, grads));
            stage_grads[i] = FeatureMap::zeros(0, 0, 0);
        }
        let mut g = flow.expect("four stages always produce a flow");
        crate::nn::relu_mask_map(&mut g, &trace.stem_out);
        let _ = self.stem.backward(&trace.input, &g, grads);
    }

    pub fn save_weights(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "backbone",
            "spec": self.spec,
        });
        let names = self.param_names();
        let arrays = self.param_arrays();
        let tensors: Vec<(String, &[f64])> = names
            .into_iter()
            .zip(arrays)
            .map(|(n, a)| (n, a.as_slice()))
            .collect();
        store::write_archive(path, meta, &tensors)
    }

    fn load_weights(&mut self, path: &Path) -> Result<()> {
        let archive = store::read_archive(path)?;
        let names = self.param_names();
        for (name, dst) in names.iter().zip(self.param_arrays_mut()) {
            archive.load_into(name, dst, path)?;
        }
        Ok(())
    }
}

/// Fits a selected patch to the extractor input: center crop when larger,
/// upscale when smaller, identity when it already matches.
pub fn adapt_patch(patch: &RgbImage, input_size: u32) -> Result<RgbImage> {
    let s = input_size;
    let (w, h) = (patch.width(), patch.height());
    if w == s && h == s {
        return Ok(patch.clone());
    }
    if w >= s && h >= s {
        return patch.crop((w - s) / 2, (h - s) / 2, s, s);
    }
    resample(patch, s, s, ResampleKernel::Bilinear)
}

/// Concatenates the pooled vectors of the enabled stages, in stage order.
pub fn fuse_features(sf: &StageFeatures, stage_mask: [bool; 4]) -> Result<QualityFeature> {
    if !stage_mask.iter().any(|&on| on) {
        return Err(Error::EmptyFusion);
    }
    let mut vector = Vec::new();
    for (map, on) in sf.maps.iter().zip(stage_mask) {
        if on {
            vector.extend(global_average_pool(map));
        }
    }
    Ok(QualityFeature { vector, stage_mask })
}
