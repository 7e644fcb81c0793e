//! Minimal f64 tensor and layer machinery behind the feature extractor and
//! the prediction heads: 3x3 convolutions, linear layers, ReLU, global
//! average pooling, softmax, and an Adam optimizer.
//!
//! Gradients are accumulated into a [`GradStore`] whose slots mirror the
//! parameter arrays of the owning model in a fixed canonical order, which
//! keeps per-sample backward passes independent (and therefore
//! parallelizable) and makes optimizer state and finite-difference checks
//! straightforward.

use rand::Rng;
use rand_distr::StandardNormal;

/// Channel-major feature map (`data[c][y][x]` flattened).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub ch: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(ch: usize, h: usize, w: usize) -> Self {
        Self { ch, h, w, data: vec![0.0; ch * h * w] }
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Per-parameter-array gradient buffers, slot-aligned with the model.
#[derive(Debug, Clone)]
pub struct GradStore {
    slots: Vec<Vec<f64>>,
}

impl GradStore {
    pub fn with_shapes(shapes: &[usize]) -> Self {
        Self { slots: shapes.iter().map(|&n| vec![0.0; n]).collect() }
    }

    #[inline]
    pub fn slot_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.slots[id]
    }

    pub fn slot(&self, id: usize) -> &[f64] {
        &self.slots[id]
    }

    pub fn add_assign(&mut self, other: &GradStore) {
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for slot in &mut self.slots {
            for g in slot.iter_mut() {
                *g *= factor;
            }
        }
    }

    pub fn slots(&self) -> &[Vec<f64>] {
        &self.slots
    }
}

/// 3x3 convolution, padding 1, configurable stride.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    /// `[out_ch][in_ch][3][3]` flattened.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// GradStore slot of `weight`; `bias` lives at `slot + 1`.
    pub slot: usize,
}

pub const KERNEL: usize = 3;
const PAD: i64 = 1;

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, stride: usize, slot: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            stride,
            weight: vec![0.0; out_ch * in_ch * KERNEL * KERNEL],
            bias: vec![0.0; out_ch],
            slot,
        }
    }

    pub fn init_he<R: Rng>(&mut self, rng: &mut R) {
        let std = (2.0 / (self.in_ch * KERNEL * KERNEL) as f64).sqrt();
        for w in self.weight.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *w = n * std;
        }
        self.bias.iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + 2 * PAD as usize - KERNEL) / self.stride + 1;
        let ow = (w + 2 * PAD as usize - KERNEL) / self.stride + 1;
        (oh, ow)
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        debug_assert_eq!(x.ch, self.in_ch);
        let (oh, ow) = self.out_size(x.h, x.w);
        let mut out = FeatureMap::zeros(self.out_ch, oh, ow);
        let (h, w) = (x.h as i64, x.w as i64);
        for o in 0..self.out_ch {
            let obase = o * oh * ow;
            for oy in 0..oh {
                let iy0 = (oy * self.stride) as i64 - PAD;
                for ox in 0..ow {
                    let ix0 = (ox * self.stride) as i64 - PAD;
                    let mut acc = self.bias[o];
                    for i in 0..self.in_ch {
                        let wbase = ((o * self.in_ch + i) * KERNEL) * KERNEL;
                        let ibase = i * x.h * x.w;
                        for ky in 0..KERNEL {
                            let iy = iy0 + ky as i64;
                            if iy < 0 || iy >= h {
                                continue;
                            }
                            let irow = ibase + iy as usize * x.w;
                            let wrow = wbase + ky * KERNEL;
                            for kx in 0..KERNEL {
                                let ix = ix0 + kx as i64;
                                if ix < 0 || ix >= w {
                                    continue;
                                }
                                acc += self.weight[wrow + kx] * x.data[irow + ix as usize];
                            }
                        }
                    }
                    out.data[obase + oy * ow + ox] = acc;
                }
            }
        }
        out
    }

    /// Backward pass: accumulates weight/bias gradients into `grads` and
    /// returns the gradient with respect to the input.
    pub fn backward(&self, x: &FeatureMap, g_out: &FeatureMap, grads: &mut GradStore) -> FeatureMap {
        let (oh, ow) = (g_out.h, g_out.w);
        let mut gx = FeatureMap::zeros(x.ch, x.h, x.w);
        let (h, w) = (x.h as i64, x.w as i64);
        {
            let gw_gb = grads.slots.split_at_mut(self.slot + 1);
            let gw = &mut gw_gb.0[self.slot];
            let gb = &mut gw_gb.1[0];
            for o in 0..self.out_ch {
                let obase = o * oh * ow;
                for oy in 0..oh {
                    let iy0 = (oy * self.stride) as i64 - PAD;
                    for ox in 0..ow {
                        let g = g_out.data[obase + oy * ow + ox];
                        if g == 0.0 {
                            continue;
                        }
                        let ix0 = (ox * self.stride) as i64 - PAD;
                        gb[o] += g;
                        for i in 0..self.in_ch {
                            let wbase = ((o * self.in_ch + i) * KERNEL) * KERNEL;
                            let ibase = i * x.h * x.w;
                            for ky in 0..KERNEL {
                                let iy = iy0 + ky as i64;
                                if iy < 0 || iy >= h {
                                    continue;
                                }
                                let irow = ibase + iy as usize * x.w;
                                let wrow = wbase + ky * KERNEL;
                                for kx in 0..KERNEL {
                                    let ix = ix0 + kx as i64;
                                    if ix < 0 || ix >= w {
                                        continue;
                                    }
                                    let idx = irow + ix as usize;
                                    gw[wrow + kx] += g * x.data[idx];
                                    gx.data[idx] += g * self.weight[wrow + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
        gx
    }
}

/// Fully connected layer.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out_dim][in_dim]` flattened.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub slot: usize,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, slot: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
            slot,
        }
    }

    pub fn init_he<R: Rng>(&mut self, rng: &mut R) {
        let std = (2.0 / self.in_dim as f64).sqrt();
        for w in self.weight.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *w = n * std;
        }
        self.bias.iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut out = self.bias.clone();
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            *out_v += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        out
    }

    pub fn backward(&self, x: &[f64], g_out: &[f64], grads: &mut GradStore) -> Vec<f64> {
        let mut gx = vec![0.0; self.in_dim];
        {
            let gw_gb = grads.slots.split_at_mut(self.slot + 1);
            let gw = &mut gw_gb.0[self.slot];
            let gb = &mut gw_gb.1[0];
            for (o, &g) in g_out.iter().enumerate() {
                gb[o] += g;
                let row = o * self.in_dim;
                for i in 0..self.in_dim {
                    gw[row + i] += g * x[i];
                    gx[i] += g * self.weight[row + i];
                }
            }
        }
        gx
    }
}

pub fn relu_map(mut m: FeatureMap) -> FeatureMap {
    for v in m.data.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    m
}

pub fn relu_vec(mut v: Vec<f64>) -> Vec<f64> {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    v
}

/// Masks a gradient by the forward activation (ReLU passes gradient only
/// where the output was strictly positive).
pub fn relu_mask_map(grad: &mut FeatureMap, activated: &FeatureMap) {
    for (g, &a) in grad.data.iter_mut().zip(&activated.data) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

pub fn relu_mask_vec(grad: &mut [f64], activated: &[f64]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Spatial mean per channel.
pub fn global_average_pool(map: &FeatureMap) -> Vec<f64> {
    let area = (map.h * map.w) as f64;
    (0..map.ch)
        .map(|c| {
            map.data[c * map.h * map.w..(c + 1) * map.h * map.w]
                .iter()
                .sum::<f64>()
                / area
        })
        .collect()
}

/// Distributes a pooled gradient uniformly over the spatial positions.
pub fn global_average_pool_backward(g_pooled: &[f64], ch: usize, h: usize, w: usize) -> FeatureMap {
    let mut out = FeatureMap::zeros(ch, h, w);
    let inv = 1.0 / (h * w) as f64;
    for c in 0..ch {
        let g = g_pooled[c] * inv;
        out.data[c * h * w..(c + 1) * h * w].iter_mut().for_each(|v| *v = g);
    }
    out
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Adam with bias correction; moments are slot-aligned with the model.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update over slot-aligned parameters and gradients.
    pub fn update(&mut self, params: &mut [&mut Vec<f64>], grads: &GradStore, lr: f64) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for (slot, param) in params.iter_mut().enumerate() {
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            let g = grads.slot(slot);
            for i in 0..param.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / b1t;
                let vhat = v[i] / b2t;
                param[i] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn random_map(ch: usize, h: usize, w: usize, seed: u64) -> FeatureMap {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut m = FeatureMap::zeros(ch, h, w);
        for v in m.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        m
    }

    /// Direct per-pixel convolution oracle.
    fn conv_oracle(conv: &Conv2d, x: &FeatureMap) -> FeatureMap {
        let (oh, ow) = conv.out_size(x.h, x.w);
        let mut out = FeatureMap::zeros(conv.out_ch, oh, ow);
        for o in 0..conv.out_ch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = conv.bias[o];
                    for i in 0..conv.in_ch {
                        for ky in 0..3usize {
                            for kx in 0..3usize {
                                let iy = (oy * conv.stride + ky) as i64 - 1;
                                let ix = (ox * conv.stride + kx) as i64 - 1;
                                if iy < 0 || ix < 0 || iy >= x.h as i64 || ix >= x.w as i64 {
                                    continue;
                                }
                                acc += conv.weight[((o * conv.in_ch + i) * 3 + ky) * 3 + kx]
                                    * x.at(i, iy as usize, ix as usize);
                            }
                        }
                    }
                    out.data[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_forward_matches_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for stride in [1, 2] {
            let mut conv = Conv2d::new(3, 4, stride, 0);
            conv.init_he(&mut rng);
            for b in conv.bias.iter_mut() {
                *b = rng.gen_range(-0.5..0.5);
            }
            let x = random_map(3, 7, 9, 42 + stride as u64);
            let got = conv.forward(&x);
            let want = conv_oracle(&conv, &x);
            assert_eq!(got.h, want.h);
            assert_eq!(got.w, want.w);
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut conv = Conv2d::new(2, 3, 2, 0);
        conv.init_he(&mut rng);
        let x = random_map(2, 6, 6, 3);

        // scalar objective: sum of conv output
        let objective = |c: &Conv2d, x: &FeatureMap| c.forward(x).data.iter().sum::<f64>();

        let (oh, ow) = conv.out_size(x.h, x.w);
        let g_out = FeatureMap { ch: 3, h: oh, w: ow, data: vec![1.0; 3 * oh * ow] };
        let mut grads = GradStore::with_shapes(&[conv.weight.len(), conv.bias.len()]);
        let gx = conv.backward(&x, &g_out, &mut grads);

        let h = 1e-6;
        for idx in [0usize, 5, 17, conv.weight.len() - 1] {
            let orig = conv.weight[idx];
            conv.weight[idx] = orig + h;
            let up = objective(&conv, &x);
            conv.weight[idx] = orig - h;
            let dn = objective(&conv, &x);
            conv.weight[idx] = orig;
            let fd = (up - dn) / (2.0 * h);
            assert!((grads.slot(0)[idx] - fd).abs() < 1e-6, "weight {idx}");
        }
        for idx in [0usize, 2] {
            let orig = conv.bias[idx];
            conv.bias[idx] = orig + h;
            let up = objective(&conv, &x);
            conv.bias[idx] = orig - h;
            let dn = objective(&conv, &x);
            conv.bias[idx] = orig;
            let fd = (up - dn) / (2.0 * h);
            assert!((grads.slot(1)[idx] - fd).abs() < 1e-6, "bias {idx}");
        }
        // input gradient via fd on a few coordinates
        let mut x2 = x.clone();
        for idx in [0usize, 13, 40] {
            let orig = x2.data[idx];
            x2.data[idx] = orig + h;
            let up = objective(&conv, &x2);
            x2.data[idx] = orig - h;
            let dn = objective(&conv, &x2);
            x2.data[idx] = orig;
            let fd = (up - dn) / (2.0 * h);
            assert!((gx.data[idx] - fd).abs() < 1e-6, "input {idx}");
        }
    }

    #[test]
    fn linear_backward_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut lin = Linear::new(5, 3, 0);
        lin.init_he(&mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g_out = vec![0.3, -0.7, 1.1];

        let mut grads = GradStore::with_shapes(&[lin.weight.len(), lin.bias.len()]);
        let gx = lin.backward(&x, &g_out, &mut grads);

        let objective = |l: &Linear, x: &[f64]| {
            l.forward(x).iter().zip(&g_out).map(|(y, g)| y * g).sum::<f64>()
        };
        let h = 1e-6;
        for idx in 0..lin.weight.len() {
            let orig = lin.weight[idx];
            lin.weight[idx] = orig + h;
            let up = objective(&lin, &x);
            lin.weight[idx] = orig - h;
            let dn = objective(&lin, &x);
            lin.weight[idx] = orig;
            assert!((grads.slot(0)[idx] - (up - dn) / (2.0 * h)).abs() < 1e-8);
        }
        let mut x2 = x.clone();
        for idx in 0..5 {
            let orig = x2[idx];
            x2[idx] = orig + h;
            let up = objective(&lin, &x2);
            x2[idx] = orig - h;
            let dn = objective(&lin, &x2);
            x2[idx] = orig;
            assert!((gx[idx] - (up - dn) / (2.0 * h)).abs() < 1e-8);
        }
    }

    #[test]
    fn gap_is_linear_and_matches_loop() {
        let x = random_map(4, 3, 3, 7);
        let y = random_map(4, 3, 3, 8);
        let px = global_average_pool(&x);
        for c in 0..4 {
            let mut sum = 0.0;
            for yy in 0..3 {
                for xx in 0..3 {
                    sum += x.at(c, yy, xx);
                }
            }
            assert!((px[c] - sum / 9.0).abs() < 1e-12);
        }
        // linearity: pool(2x + 3y) = 2 pool(x) + 3 pool(y)
        let mut combo = FeatureMap::zeros(4, 3, 3);
        for i in 0..combo.data.len() {
            combo.data[i] = 2.0 * x.data[i] + 3.0 * y.data[i];
        }
        let pc = global_average_pool(&combo);
        let py = global_average_pool(&y);
        for c in 0..4 {
            assert!((pc[c] - (2.0 * px[c] + 3.0 * py[c])).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_of_one_by_one_is_identity() {
        let m = FeatureMap { ch: 3, h: 1, w: 1, data: vec![5.0, -2.0, 0.25] };
        assert_eq!(global_average_pool(&m), vec![5.0, -2.0, 0.25]);
    }

    #[test]
    fn softmax_properties() {
        let p = softmax(&[0.7, 0.7]);
        assert!((p[0] - 0.5).abs() < 1e-12);
        let p = softmax(&[3.0, -17.0]);
        assert!(p[0] > 1.0 - 1e-8);
        // shift invariance
        let a = softmax(&[1.2, -0.4]);
        let b = softmax(&[1.2 + 100.0, -0.4 + 100.0]);
        assert!((a[0] - b[0]).abs() < 1e-12);
        assert!((a[0] + a[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_reduces_a_quadratic() {
        // minimize (p - 3)^2 with Adam
        let mut param = vec![0.0f64];
        let mut opt = Adam::new(&[1]);
        for _ in 0..2000 {
            let mut grads = GradStore::with_shapes(&[1]);
            grads.slot_mut(0)[0] = 2.0 * (param[0] - 3.0);
            let mut refs = [&mut param];
            opt.update(&mut refs, &grads, 0.01);
        }
        assert!((param[0] - 3.0).abs() < 1e-2);
    }
}
