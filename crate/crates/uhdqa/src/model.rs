//! The trainable unit: shared feature extractor, the two prediction heads,
//! and the learnable task-uncertainty parameters, with a joint backward
//! pass over the pooled image-level objective.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::backbone::{Backbone, BackboneSpec, BackboneTrace, BACKBONE_SLOTS};
use crate::error::{Error, Result};
use crate::heads::{HeadSpec, HeadTask, HeadTrace, ImagePrediction, MlpHead, PatchPrediction, HEAD_SLOTS};
use crate::imaging::RgbImage;
use crate::nn::{
    global_average_pool, global_average_pool_backward, softmax, FeatureMap, GradStore,
};
use crate::seeding;

const CLASS_BASE: usize = BACKBONE_SLOTS;
const REG_BASE: usize = BACKBONE_SLOTS + HEAD_SLOTS;
/// GradStore slot of the uncertainty parameters.
pub const UNC_SLOT: usize = BACKBONE_SLOTS + 2 * HEAD_SLOTS;
pub const MODEL_SLOTS: usize = UNC_SLOT + 1;

pub struct QaModel {
    pub backbone: Backbone,
    pub stage_mask: [bool; 4],
    pub class_head: MlpHead,
    pub reg_head: MlpHead,
    /// `[log sigma1^2, log sigma2^2]`, initialized to zero so training
    /// starts at the unweighted-sum objective.
    pub log_sigma_sq: Vec<f64>,
}

/// Everything the backward pass needs for one patch.
pub struct PatchTrace {
    pub backbone: BackboneTrace,
    pub class: HeadTrace,
    pub reg: HeadTrace,
    pub prob_true: f64,
}

impl PatchTrace {
    pub fn q(&self) -> f64 {
        self.reg.output[0]
    }
}

/// Forward state for one image: patch traces plus the pooled outputs.
pub struct ImageTrace {
    pub patches: Vec<PatchTrace>,
    pub y_pred: f64,
    pub q_score: f64,
}

impl QaModel {
    pub fn new(
        backbone_spec: BackboneSpec,
        stage_mask: [bool; 4],
        hidden_dim: usize,
        head_seed: u64,
    ) -> Result<Self> {
        if !stage_mask.iter().any(|&on| on) {
            return Err(Error::EmptyFusion);
        }
        let fused = backbone_spec.fused_len(stage_mask);
        let backbone = Backbone::from_spec(backbone_spec)?;
        let mut class_head = MlpHead::new(
            HeadSpec { input_dim: fused, hidden_dim, task: HeadTask::Classification },
            CLASS_BASE,
        );
        let mut reg_head = MlpHead::new(
            HeadSpec { input_dim: fused, hidden_dim, task: HeadTask::Regression },
            REG_BASE,
        );
        let mut rng = ChaCha20Rng::seed_from_u64(seeding::derive(head_seed, 0x6865_6164));
        class_head.init_random(&mut rng);
        reg_head.init_random(&mut rng);
        Ok(Self {
            backbone,
            stage_mask,
            class_head,
            reg_head,
            log_sigma_sq: vec![0.0, 0.0],
        })
    }

    pub fn fused_len(&self) -> usize {
        self.backbone.spec.fused_len(self.stage_mask)
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        let mut shapes = self.backbone.param_shapes();
        shapes.extend(self.class_head.param_shapes());
        shapes.extend(self.reg_head.param_shapes());
        shapes.push(self.log_sigma_sq.len());
        shapes
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .backbone
            .param_names()
            .into_iter()
            .map(|n| format!("backbone.{n}"))
            .collect();
        names.extend(self.class_head.param_names("class_head"));
        names.extend(self.reg_head.param_names("reg_head"));
        names.push("uncertainty.log_sigma_sq".into());
        names
    }

    pub fn param_arrays(&self) -> Vec<&Vec<f64>> {
        let mut arrays = self.backbone.param_arrays();
        arrays.extend(self.class_head.param_arrays());
        arrays.extend(self.reg_head.param_arrays());
        arrays.push(&self.log_sigma_sq);
        arrays
    }

    pub fn param_arrays_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut arrays = self.backbone.param_arrays_mut();
        arrays.extend(self.class_head.param_arrays_mut());
        arrays.extend(self.reg_head.param_arrays_mut());
        arrays.push(&mut self.log_sigma_sq);
        arrays
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().sum()
    }

    pub fn grad_store(&self) -> GradStore {
        GradStore::with_shapes(&self.param_shapes())
    }

    fn fuse_from_trace(&self, trace: &BackboneTrace) -> Vec<f64> {
        let mut fused = Vec::with_capacity(self.fused_len());
        for (map, on) in trace.stage_outs.iter().zip(self.stage_mask) {
            if on {
                fused.extend(global_average_pool(map));
            }
        }
        fused
    }

    pub fn forward_patch(&self, input: FeatureMap) -> PatchTrace {
        let backbone = self.backbone.forward_trace(input);
        let fused = self.fuse_from_trace(&backbone);
        let class = self.class_head.forward_trace(fused.clone());
        let reg = self.reg_head.forward_trace(fused);
        let prob_true = softmax(&class.output)[0];
        PatchTrace { backbone, class, reg, prob_true }
    }

    /// Forward over the selected patches of one image, pooling per-patch
    /// probability and quality by arithmetic mean.
    pub fn forward_image(&self, inputs: Vec<FeatureMap>) -> ImageTrace {
        let patches: Vec<PatchTrace> =
            inputs.into_iter().map(|x| self.forward_patch(x)).collect();
        let n = patches.len() as f64;
        let y_pred = patches.iter().map(|p| p.prob_true).sum::<f64>() / n;
        let q_score = patches.iter().map(|p| p.q()).sum::<f64>() / n;
        ImageTrace { patches, y_pred, q_score }
    }

    /// Backward from gradients on the pooled outputs (`d_y` on `y_pred`,
    /// `d_q` on `q_score`); accumulates into `grads`.
    pub fn backward_image(&self, trace: &ImageTrace, d_y: f64, d_q: f64, grads: &mut GradStore) {
        let n = trace.patches.len() as f64;
        let dys = vec![d_y / n; trace.patches.len()];
        let dqs = vec![d_q / n; trace.patches.len()];
        self.backward_patchwise(trace, &dys, &dqs, grads);
    }

    /// Backward from per-patch gradients on `y_n` and `q_n`.
    pub fn backward_patchwise(
        &self,
        trace: &ImageTrace,
        d_ys: &[f64],
        d_qs: &[f64],
        grads: &mut GradStore,
    ) {
        for ((patch, &d_y), &d_q) in trace.patches.iter().zip(d_ys).zip(d_qs) {
            // softmax probability of the positive class
            let p = patch.prob_true;
            let g_logit = d_y * p * (1.0 - p);
            let g_f_class =
                self.class_head
                    .backward(&patch.class, &[g_logit, -g_logit], grads);
            let g_f_reg = self.reg_head.backward(&patch.reg, &[d_q], grads);

            let mut g_fused = g_f_class;
            for (a, b) in g_fused.iter_mut().zip(&g_f_reg) {
                *a += b;
            }

            // split the fused gradient back onto the enabled stage taps
            let mut offset = 0;
            let mut stage_grads: Vec<FeatureMap> = Vec::with_capacity(4);
            for (map, on) in patch.backbone.stage_outs.iter().zip(self.stage_mask) {
                if on {
                    let seg = &g_fused[offset..offset + map.ch];
                    offset += map.ch;
                    stage_grads.push(global_average_pool_backward(seg, map.ch, map.h, map.w));
                } else {
                    stage_grads.push(FeatureMap::zeros(map.ch, map.h, map.w));
                }
            }
            let stage_grads: [FeatureMap; 4] =
                stage_grads.try_into().expect("exactly four stages");
            self.backbone.backward(&patch.backbone, stage_grads, grads);
        }
    }

    /// Inference on input-sized patches.
    pub fn predict_patches(&self, patches: &[RgbImage]) -> Result<Vec<PatchPrediction>> {
        patches
            .iter()
            .map(|p| {
                let input = self.backbone.patch_to_input(p)?;
                let trace = self.forward_patch(input);
                Ok(PatchPrediction { y: trace.prob_true, q: trace.q() })
            })
            .collect()
    }

    pub fn predict_pooled(&self, patches: &[RgbImage]) -> Result<ImagePrediction> {
        crate::heads::pool_image(&self.predict_patches(patches)?)
    }

    /// Parameter tensors in canonical order, named for the archive.
    pub fn named_params(&self) -> Vec<(String, &[f64])> {
        self.param_names()
            .into_iter()
            .zip(self.param_arrays())
            .map(|(n, a)| (n, a.as_slice()))
            .collect()
    }
}
