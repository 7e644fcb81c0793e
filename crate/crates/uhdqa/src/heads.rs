//! Two-layer perceptron heads over the fused feature: a 2-way softmax for
//! true/pseudo classification and an unactivated scalar for quality, plus
//! average pooling of per-patch results to the image level.

use rand::Rng;

use crate::backbone::QualityFeature;
use crate::error::{Error, Result};
use crate::nn::{relu_vec, softmax, GradStore, Linear};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadTask {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeadSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub task: HeadTask,
}

impl HeadSpec {
    pub fn new(input_dim: usize, task: HeadTask) -> Self {
        Self { input_dim, hidden_dim: 128, task }
    }

    pub fn output_dim(&self) -> usize {
        match self.task {
            HeadTask::Classification => 2,
            HeadTask::Regression => 1,
        }
    }
}

/// Per-patch prediction: positive-class probability and quality score.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PatchPrediction {
    pub y: f64,
    pub q: f64,
}

/// Image-level prediction: arithmetic means of the patch values.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ImagePrediction {
    pub y_pred: f64,
    pub q_score: f64,
    pub n_patches: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassDecision {
    True4k,
    Pseudo4k,
}

impl ClassDecision {
    pub fn name(self) -> &'static str {
        match self {
            ClassDecision::True4k => "true_4k",
            ClassDecision::Pseudo4k => "pseudo_4k",
        }
    }
}

/// Activations kept for the backward pass.
pub struct HeadTrace {
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

/// Two fully connected layers with a rectified hidden layer.
pub struct MlpHead {
    pub spec: HeadSpec,
    pub fc1: Linear,
    pub fc2: Linear,
}

/// GradStore slots one head occupies.
pub const HEAD_SLOTS: usize = 4;

impl MlpHead {
    pub fn new(spec: HeadSpec, base_slot: usize) -> Self {
        let fc1 = Linear::new(spec.input_dim, spec.hidden_dim, base_slot);
        let fc2 = Linear::new(spec.hidden_dim, spec.output_dim(), base_slot + 2);
        Self { spec, fc1, fc2 }
    }

    pub fn init_random<R: Rng>(&mut self, rng: &mut R) {
        self.fc1.init_he(rng);
        self.fc2.init_he(rng);
    }

    pub fn forward_trace(&self, input: Vec<f64>) -> HeadTrace {
        let hidden = relu_vec(self.fc1.forward(&input));
        let output = self.fc2.forward(&hidden);
        HeadTrace { input, hidden, output }
    }

    /// Backward from a gradient on the raw outputs (logits for the
    /// classification head); returns the gradient on the input feature.
    pub fn backward(&self, trace: &HeadTrace, g_out: &[f64], grads: &mut GradStore) -> Vec<f64> {
        let mut g_hidden = self.fc2.backward(&trace.hidden, g_out, grads);
        crate::nn::relu_mask_vec(&mut g_hidden, &trace.hidden);
        self.fc1.backward(&trace.input, &g_hidden, grads)
    }

    fn check_input(&self, f: &QualityFeature) -> Result<()> {
        if f.vector.len() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "feature length {} does not match head input {}",
                f.vector.len(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Softmax probability pair `(p_true, p_pseudo)`.
    pub fn classify(&self, f: &QualityFeature) -> Result<(f64, f64)> {
        if self.spec.task != HeadTask::Classification {
            return Err(Error::Shape("classify called on a regression head".into()));
        }
        self.check_input(f)?;
        let trace = self.forward_trace(f.vector.clone());
        let p = softmax(&trace.output);
        Ok((p[0], p[1]))
    }

    /// Unbounded scalar quality output.
    pub fn regress(&self, f: &QualityFeature) -> Result<f64> {
        if self.spec.task != HeadTask::Regression {
            return Err(Error::Shape("regress called on a classification head".into()));
        }
        self.check_input(f)?;
        let trace = self.forward_trace(f.vector.clone());
        Ok(trace.output[0])
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        vec![
            self.fc1.weight.len(),
            self.fc1.bias.len(),
            self.fc2.weight.len(),
            self.fc2.bias.len(),
        ]
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        vec![
            format!("{prefix}.fc1.weight"),
            format!("{prefix}.fc1.bias"),
            format!("{prefix}.fc2.weight"),
            format!("{prefix}.fc2.bias"),
        ]
    }

    pub fn param_arrays(&self) -> Vec<&Vec<f64>> {
        vec![&self.fc1.weight, &self.fc1.bias, &self.fc2.weight, &self.fc2.bias]
    }

    pub fn param_arrays_mut(&mut self) -> Vec<&mut Vec<f64>> {
        vec![
            &mut self.fc1.weight,
            &mut self.fc1.bias,
            &mut self.fc2.weight,
            &mut self.fc2.bias,
        ]
    }
}

/// Arithmetic mean of per-patch predictions.
pub fn pool_image(preds: &[PatchPrediction]) -> Result<ImagePrediction> {
    if preds.is_empty() {
        return Err(Error::EmptyInput("pool_image needs at least one patch".into()));
    }
    let n = preds.len() as f64;
    Ok(ImagePrediction {
        y_pred: preds.iter().map(|p| p.y).sum::<f64>() / n,
        q_score: preds.iter().map(|p| p.q).sum::<f64>() / n,
        n_patches: preds.len(),
    })
}

/// Boundary-inclusive threshold rule on the pooled probability.
pub fn decide_class(img: &ImagePrediction, threshold: f64) -> ClassDecision {
    if img.y_pred >= threshold {
        ClassDecision::True4k
    } else {
        ClassDecision::Pseudo4k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn feature(values: Vec<f64>) -> QualityFeature {
        QualityFeature { vector: values, stage_mask: [true; 4] }
    }

    fn random_head(task: HeadTask, input_dim: usize, seed: u64) -> MlpHead {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut head = MlpHead::new(HeadSpec::new(input_dim, task), 0);
        head.init_random(&mut rng);
        head
    }

    #[test]
    fn equal_logits_give_even_split() {
        // zero weights leave both logits at the (equal) biases
        let head = MlpHead::new(HeadSpec::new(6, HeadTask::Classification), 0);
        let (p_true, p_pseudo) = head.classify(&feature(vec![0.3; 6])).unwrap();
        assert!((p_true - 0.5).abs() < 1e-12);
        assert!((p_true + p_pseudo - 1.0).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits_pin_probability() {
        let mut head = MlpHead::new(HeadSpec::new(1, HeadTask::Classification), 0);
        // one hidden unit copies the input; logits become (z, z-20)
        head.fc1.weight[0] = 1.0;
        head.fc2.weight[0] = 1.0;
        head.fc2.weight[1] = 1.0;
        head.fc2.bias[1] = -20.0;
        let (p_true, _) = head.classify(&feature(vec![3.0])).unwrap();
        assert!((p_true - 1.0).abs() < 1e-8);
    }

    #[test]
    fn classification_matches_scalar_forward_oracle() {
        let head = random_head(HeadTask::Classification, 10, 3);
        let f: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();

        // hand-rolled affine + relu + affine + softmax
        let mut hidden = vec![0.0; 128];
        for o in 0..128 {
            let mut acc = head.fc1.bias[o];
            for i in 0..10 {
                acc += head.fc1.weight[o * 10 + i] * f[i];
            }
            hidden[o] = acc.max(0.0);
        }
        let mut logits = [0.0f64; 2];
        for o in 0..2 {
            let mut acc = head.fc2.bias[o];
            for (i, h) in hidden.iter().enumerate() {
                acc += head.fc2.weight[o * 128 + i] * h;
            }
            logits[o] = acc;
        }
        let e0 = (logits[0] - logits[0].max(logits[1])).exp();
        let e1 = (logits[1] - logits[0].max(logits[1])).exp();
        let expect = e0 / (e0 + e1);

        let (p_true, p_pseudo) = head.classify(&feature(f)).unwrap();
        assert!((p_true - expect).abs() < 1e-12);
        assert!((p_true + p_pseudo - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regression_zero_and_constructed_cases() {
        let zero = MlpHead::new(HeadSpec::new(4, HeadTask::Regression), 0);
        assert_eq!(zero.regress(&feature(vec![9.0, -2.0, 3.0, 0.1])).unwrap(), 0.0);

        // single hidden unit passes through coordinate 2 plus a bias
        let mut head = MlpHead::new(HeadSpec::new(4, HeadTask::Regression), 0);
        head.fc1.weight[2] = 1.0;
        head.fc2.weight[0] = 1.0;
        head.fc2.bias[0] = 0.25;
        let out = head.regress(&feature(vec![0.0, 0.0, 3.5, 0.0])).unwrap();
        assert!((out - 3.75).abs() < 1e-12);
    }

    #[test]
    fn regression_matches_scalar_forward_oracle() {
        let head = random_head(HeadTask::Regression, 7, 9);
        let f: Vec<f64> = (0..7).map(|i| (i as f64 * 1.1).cos()).collect();
        let mut expect = head.fc2.bias[0];
        for o in 0..128 {
            let mut acc = head.fc1.bias[o];
            for i in 0..7 {
                acc += head.fc1.weight[o * 7 + i] * f[i];
            }
            expect += head.fc2.weight[o] * acc.max(0.0);
        }
        let got = head.regress(&feature(f)).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let head = random_head(HeadTask::Classification, 8, 2);
        assert!(matches!(
            head.classify(&feature(vec![0.0; 5])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn pooling_means_and_edge_cases() {
        let preds = [
            PatchPrediction { y: 0.9, q: 80.0 },
            PatchPrediction { y: 0.8, q: 70.0 },
            PatchPrediction { y: 1.0, q: 90.0 },
        ];
        let img = pool_image(&preds).unwrap();
        assert!((img.y_pred - 0.9).abs() < 1e-12);
        assert!((img.q_score - 80.0).abs() < 1e-12);
        assert_eq!(img.n_patches, 3);

        let single = pool_image(&preds[..1]).unwrap();
        assert_eq!(single.y_pred, 0.9);
        assert_eq!(single.q_score, 80.0);

        assert!(matches!(pool_image(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn pooling_matches_summation_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let preds: Vec<PatchPrediction> = (0..100)
            .map(|_| PatchPrediction {
                y: rng.gen::<f64>(),
                q: rng.gen_range(-50.0..150.0),
            })
            .collect();
        let img = pool_image(&preds).unwrap();
        let mut sy = 0.0;
        let mut sq = 0.0;
        for p in &preds {
            sy += p.y;
            sq += p.q;
        }
        assert!((img.y_pred - sy / 100.0).abs() < 1e-12);
        assert!((img.q_score - sq / 100.0).abs() < 1e-12);
    }

    #[test]
    fn decision_threshold_is_boundary_inclusive() {
        let img = |y| ImagePrediction { y_pred: y, q_score: 0.0, n_patches: 1 };
        assert_eq!(decide_class(&img(0.7), 0.5), ClassDecision::True4k);
        assert_eq!(decide_class(&img(0.5), 0.5), ClassDecision::True4k);
        assert_eq!(decide_class(&img(0.49), 0.5), ClassDecision::Pseudo4k);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn pooling_is_permutation_invariant_and_bounded(
            ys in proptest::collection::vec(0.0f64..1.0, 1..20),
            qs_seed in 0u64..1000,
        ) {
            let mut rng = ChaCha20Rng::seed_from_u64(qs_seed);
            let preds: Vec<PatchPrediction> = ys
                .iter()
                .map(|&y| PatchPrediction { y, q: rng.gen_range(-10.0..110.0) })
                .collect();
            let img = pool_image(&preds).unwrap();

            let mut reversed = preds.clone();
            reversed.reverse();
            let img_rev = pool_image(&reversed).unwrap();
            prop_assert!((img.y_pred - img_rev.y_pred).abs() < 1e-12);
            prop_assert!((img.q_score - img_rev.q_score).abs() < 1e-12);

            let ymin = preds.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
            let ymax = preds.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(img.y_pred >= ymin - 1e-12 && img.y_pred <= ymax + 1e-12);
        }

        #[test]
        fn classifier_output_is_a_probability_pair(seed in 0u64..200) {
            let head = random_head(HeadTask::Classification, 5, seed);
            let mut rng = ChaCha20Rng::seed_from_u64(seed + 1);
            let f: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (a, b) = head.classify(&feature(f)).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((0.0..=1.0).contains(&b));
            prop_assert!((a + b - 1.0).abs() < 1e-9);
        }
    }
}
