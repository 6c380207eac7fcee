//! Tensor container and layer primitives with explicit forward, inference,
//! and backward passes in f64.
//!
//! Every layer caches what its backward pass needs during `forward`;
//! `infer` is the pure, cache-free variant used for prediction. Gradients
//! accumulate into per-layer buffers so a whole-network backward pass is a
//! chain of `backward` calls in reverse order.

// Indexed loops keep the NCHW offset arithmetic visible in the kernels.
#![allow(clippy::needless_range_loop)]

/// Dense NCHW tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(b: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            b,
            c,
            h,
            w,
            data: vec![0.0; b * c * h * w],
        }
    }

    pub fn from_vec(b: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), b * c * h * w, "tensor buffer length");
        Self { b, c, h, w, data }
    }

    #[inline]
    pub fn at(&self, bi: usize, ci: usize, y: usize, x: usize) -> f64 {
        self.data[((bi * self.c + ci) * self.h + y) * self.w + x]
    }

    pub fn plane(&self, bi: usize, ci: usize) -> &[f64] {
        let start = (bi * self.c + ci) * self.h * self.w;
        &self.data[start..start + self.h * self.w]
    }
}

/// How batch normalization sources its statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Batch statistics, updating the running estimates.
    Train,
    /// Batch statistics without touching the running estimates; forward
    /// stays a pure function of parameters, which finite-difference
    /// probing requires.
    Probe,
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    /// `out_c * in_c * k * k`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
    cache_input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self {
            in_c,
            out_c,
            k,
            stride,
            pad,
            weight: vec![0.0; out_c * in_c * k * k],
            bias: vec![0.0; out_c],
            grad_weight: vec![0.0; out_c * in_c * k * k],
            grad_bias: vec![0.0; out_c],
            cache_input: None,
        }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    pub fn clear_cache(&mut self) {
        self.cache_input = None;
    }

    /// Output index range `[lo, hi)` whose input index `o*stride + k_off -
    /// pad` stays inside `[0, in_len)`.
    fn span(o_len: usize, in_len: usize, stride: usize, pad: usize, k_off: usize) -> (usize, usize) {
        let lo = if k_off >= pad {
            0
        } else {
            (pad - k_off).div_ceil(stride)
        };
        if in_len + pad <= k_off {
            return (0, 0);
        }
        let hi = ((in_len + pad - 1 - k_off) / stride + 1).min(o_len);
        (lo.min(hi), hi)
    }

    fn compute(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.in_c, "conv input channels");
        let (oh, ow) = self.out_size(x.h, x.w);
        let mut out = Tensor::zeros(x.b, self.out_c, oh, ow);
        let kk = self.k * self.k;
        let s = self.stride;
        for bi in 0..x.b {
            for oc in 0..self.out_c {
                let o_base = (bi * self.out_c + oc) * oh * ow;
                out.data[o_base..o_base + oh * ow].fill(self.bias[oc]);
                for ic in 0..self.in_c {
                    let x_base = (bi * x.c + ic) * x.h * x.w;
                    let w_base = (oc * self.in_c + ic) * kk;
                    for ky in 0..self.k {
                        let (oy_lo, oy_hi) = Self::span(oh, x.h, s, self.pad, ky);
                        for kx in 0..self.k {
                            let w = self.weight[w_base + ky * self.k + kx];
                            let (ox_lo, ox_hi) = Self::span(ow, x.w, s, self.pad, kx);
                            for oy in oy_lo..oy_hi {
                                let in_row = x_base + (oy * s + ky - self.pad) * x.w;
                                let out_row = o_base + oy * ow;
                                // ox >= ox_lo keeps ox*s + kx >= pad
                                for ox in ox_lo..ox_hi {
                                    out.data[out_row + ox] +=
                                        w * x.data[in_row + ox * s + kx - self.pad];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let out = self.compute(x);
        self.cache_input = Some(x.clone());
        out
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        self.compute(x)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        let x = self
            .cache_input
            .take()
            .expect("conv backward without forward");
        let mut gx = Tensor::zeros(x.b, x.c, x.h, x.w);
        let kk = self.k * self.k;
        let s = self.stride;
        let (oh, ow) = (gy.h, gy.w);
        for bi in 0..x.b {
            for oc in 0..self.out_c {
                let o_base = (bi * self.out_c + oc) * oh * ow;
                let mut gb = 0.0;
                for g in &gy.data[o_base..o_base + oh * ow] {
                    gb += g;
                }
                self.grad_bias[oc] += gb;
                for ic in 0..self.in_c {
                    let x_base = (bi * x.c + ic) * x.h * x.w;
                    let w_base = (oc * self.in_c + ic) * kk;
                    for ky in 0..self.k {
                        let (oy_lo, oy_hi) = Self::span(oh, x.h, s, self.pad, ky);
                        for kx in 0..self.k {
                            let w = self.weight[w_base + ky * self.k + kx];
                            let (ox_lo, ox_hi) = Self::span(ow, x.w, s, self.pad, kx);
                            let mut gw = 0.0;
                            for oy in oy_lo..oy_hi {
                                let in_row = x_base + (oy * s + ky - self.pad) * x.w;
                                let out_row = o_base + oy * ow;
                                for ox in ox_lo..ox_hi {
                                    let g = gy.data[out_row + ox];
                                    let xi = in_row + ox * s + kx - self.pad;
                                    gw += g * x.data[xi];
                                    gx.data[xi] += g * w;
                                }
                            }
                            self.grad_weight[w_base + ky * self.k + kx] += gw;
                        }
                    }
                }
            }
        }
        gx
    }
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Vec<f64>,
    invstd: Vec<f64>,
    shape: (usize, usize, usize, usize),
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub c: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    pub grad_gamma: Vec<f64>,
    pub grad_beta: Vec<f64>,
    cache: Option<BnCache>,
}

impl BatchNorm2d {
    pub fn new(c: usize) -> Self {
        Self {
            c,
            gamma: vec![1.0; c],
            beta: vec![0.0; c],
            running_mean: vec![0.0; c],
            running_var: vec![1.0; c],
            momentum: 0.1,
            eps: 1e-5,
            grad_gamma: vec![0.0; c],
            grad_beta: vec![0.0; c],
            cache: None,
        }
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn forward(&mut self, x: &Tensor, mode: BnMode) -> Tensor {
        assert_eq!(x.c, self.c, "batch-norm channels");
        let n = (x.b * x.h * x.w) as f64;
        let plane = x.h * x.w;
        let mut out = Tensor::zeros(x.b, x.c, x.h, x.w);
        let mut xhat = vec![0.0; x.data.len()];
        let mut invstd = vec![0.0; self.c];
        for ci in 0..self.c {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for bi in 0..x.b {
                let base = (bi * x.c + ci) * plane;
                for i in 0..plane {
                    let v = x.data[base + i];
                    sum += v;
                    sq += v * v;
                }
            }
            let mean = sum / n;
            let var = (sq / n - mean * mean).max(0.0);
            let s = 1.0 / (var + self.eps).sqrt();
            invstd[ci] = s;
            for bi in 0..x.b {
                let base = (bi * x.c + ci) * plane;
                for i in 0..plane {
                    let xh = (x.data[base + i] - mean) * s;
                    xhat[base + i] = xh;
                    out.data[base + i] = self.gamma[ci] * xh + self.beta[ci];
                }
            }
            if mode == BnMode::Train {
                let unbiased = if n > 1.0 { var * n / (n - 1.0) } else { var };
                self.running_mean[ci] =
                    (1.0 - self.momentum) * self.running_mean[ci] + self.momentum * mean;
                self.running_var[ci] =
                    (1.0 - self.momentum) * self.running_var[ci] + self.momentum * unbiased;
            }
        }
        self.cache = Some(BnCache {
            xhat,
            invstd,
            shape: (x.b, x.c, x.h, x.w),
        });
        out
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.c, "batch-norm channels");
        let plane = x.h * x.w;
        let mut out = Tensor::zeros(x.b, x.c, x.h, x.w);
        for ci in 0..self.c {
            let s = 1.0 / (self.running_var[ci] + self.eps).sqrt();
            let scale = self.gamma[ci] * s;
            let shift = self.beta[ci] - scale * self.running_mean[ci];
            for bi in 0..x.b {
                let base = (bi * x.c + ci) * plane;
                for i in 0..plane {
                    out.data[base + i] = scale * x.data[base + i] + shift;
                }
            }
        }
        out
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        let cache = self.cache.take().expect("bn backward without forward");
        let (b, c, h, w) = cache.shape;
        let n = (b * h * w) as f64;
        let plane = h * w;
        let mut gx = Tensor::zeros(b, c, h, w);
        for ci in 0..c {
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for bi in 0..b {
                let base = (bi * c + ci) * plane;
                for i in 0..plane {
                    let g = gy.data[base + i];
                    sum_g += g;
                    sum_gx += g * cache.xhat[base + i];
                }
            }
            self.grad_beta[ci] += sum_g;
            self.grad_gamma[ci] += sum_gx;
            let k = self.gamma[ci] * cache.invstd[ci] / n;
            for bi in 0..b {
                let base = (bi * c + ci) * plane;
                for i in 0..plane {
                    gx.data[base + i] = k
                        * (n * gy.data[base + i] - sum_g - cache.xhat[base + i] * sum_gx);
                }
            }
        }
        gx
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    cache_out: Option<Tensor>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let out = Self::compute(x);
        self.cache_out = Some(out.clone());
        out
    }

    pub fn infer(x: &Tensor) -> Tensor {
        Self::compute(x)
    }

    pub fn clear_cache(&mut self) {
        self.cache_out = None;
    }

    fn compute(x: &Tensor) -> Tensor {
        let mut out = x.clone();
        for v in out.data.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        out
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        let out = self.cache_out.take().expect("relu backward without forward");
        let mut gx = gy.clone();
        for (g, &y) in gx.data.iter_mut().zip(&out.data) {
            if y == 0.0 {
                *g = 0.0;
            }
        }
        gx
    }
}

/// Flat argmax indices plus the input shape they refer to.
type PoolCache = (Vec<usize>, (usize, usize, usize, usize));

#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub window: usize,
    pub stride: usize,
    cache: Option<PoolCache>,
}

impl MaxPool2d {
    pub fn new(window: usize, stride: usize) -> Self {
        Self {
            window,
            stride,
            cache: None,
        }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        ((h - self.window) / self.stride + 1, (w - self.window) / self.stride + 1)
    }

    fn compute(&self, x: &Tensor) -> (Tensor, Vec<usize>) {
        let (oh, ow) = self.out_size(x.h, x.w);
        let mut out = Tensor::zeros(x.b, x.c, oh, ow);
        let mut argmax = vec![0usize; out.data.len()];
        for bi in 0..x.b {
            for ci in 0..x.c {
                let x_base = (bi * x.c + ci) * x.h * x.w;
                let o_base = (bi * x.c + ci) * oh * ow;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_i = 0;
                        for ky in 0..self.window {
                            let iy = oy * self.stride + ky;
                            for kx in 0..self.window {
                                let ix = ox * self.stride + kx;
                                let i = x_base + iy * x.w + ix;
                                if x.data[i] > best {
                                    best = x.data[i];
                                    best_i = i;
                                }
                            }
                        }
                        out.data[o_base + oy * ow + ox] = best;
                        argmax[o_base + oy * ow + ox] = best_i;
                    }
                }
            }
        }
        (out, argmax)
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let (out, argmax) = self.compute(x);
        self.cache = Some((argmax, (x.b, x.c, x.h, x.w)));
        out
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        self.compute(x).0
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        let (argmax, (b, c, h, w)) = self.cache.take().expect("pool backward without forward");
        let mut gx = Tensor::zeros(b, c, h, w);
        for (o, &i) in argmax.iter().enumerate() {
            gx.data[i] += gy.data[o];
        }
        gx
    }
}

/// Global average pooling to shape `(b, c, 1, 1)`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    cache_hw: Option<(usize, usize)>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }

    fn compute(x: &Tensor) -> Tensor {
        let plane = (x.h * x.w) as f64;
        let mut out = Tensor::zeros(x.b, x.c, 1, 1);
        for bi in 0..x.b {
            for ci in 0..x.c {
                let s: f64 = x.plane(bi, ci).iter().sum();
                out.data[bi * x.c + ci] = s / plane;
            }
        }
        out
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.cache_hw = Some((x.h, x.w));
        Self::compute(x)
    }

    pub fn infer(x: &Tensor) -> Tensor {
        Self::compute(x)
    }

    pub fn clear_cache(&mut self) {
        self.cache_hw = None;
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        let (h, w) = self.cache_hw.take().expect("pool backward without forward");
        let scale = 1.0 / (h * w) as f64;
        let mut gx = Tensor::zeros(gy.b, gy.c, h, w);
        for bi in 0..gy.b {
            for ci in 0..gy.c {
                let g = gy.data[bi * gy.c + ci] * scale;
                let base = (bi * gy.c + ci) * h * w;
                for i in 0..h * w {
                    gx.data[base + i] = g;
                }
            }
        }
        gx
    }
}

/// Fully connected layer on `(b, c, 1, 1)` tensors.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_f: usize,
    pub out_f: usize,
    /// `out_f * in_f`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
    cache_input: Option<Tensor>,
}

impl Linear {
    pub fn new(in_f: usize, out_f: usize) -> Self {
        Self {
            in_f,
            out_f,
            weight: vec![0.0; out_f * in_f],
            bias: vec![0.0; out_f],
            grad_weight: vec![0.0; out_f * in_f],
            grad_bias: vec![0.0; out_f],
            cache_input: None,
        }
    }

    fn compute(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.in_f, "linear input features");
        assert_eq!((x.h, x.w), (1, 1), "linear expects pooled features");
        let mut out = Tensor::zeros(x.b, self.out_f, 1, 1);
        for bi in 0..x.b {
            for o in 0..self.out_f {
                let mut acc = self.bias[o];
                let w = &self.weight[o * self.in_f..(o + 1) * self.in_f];
                for (i, wi) in w.iter().enumerate() {
                    acc += wi * x.data[bi * self.in_f + i];
                }
                out.data[bi * self.out_f + o] = acc;
            }
        }
        out
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let out = self.compute(x);
        self.cache_input = Some(x.clone());
        out
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        self.compute(x)
    }

    pub fn clear_cache(&mut self) {
        self.cache_input = None;
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        let x = self
            .cache_input
            .take()
            .expect("linear backward without forward");
        let mut gx = Tensor::zeros(x.b, self.in_f, 1, 1);
        for bi in 0..x.b {
            for o in 0..self.out_f {
                let g = gy.data[bi * self.out_f + o];
                self.grad_bias[o] += g;
                for i in 0..self.in_f {
                    self.grad_weight[o * self.in_f + i] += g * x.data[bi * self.in_f + i];
                    gx.data[bi * self.in_f + i] += g * self.weight[o * self.in_f + i];
                }
            }
        }
        gx
    }
}

/// Row-wise stable softmax over `(b, c, 1, 1)`.
pub fn softmax(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    for bi in 0..logits.b {
        let row = &mut out.data[bi * logits.c..(bi + 1) * logits.c];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(b: usize, c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_vec(
            b,
            c,
            h,
            w,
            (0..b * c * h * w).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        )
    }

    #[test]
    fn conv_identity_kernel_reproduces_the_input() {
        let mut conv = Conv2d::new(1, 1, 1, 1, 0);
        conv.weight[0] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(2, 1, 5, 4, &mut rng);
        assert_eq!(conv.infer(&x).data, x.data);
    }

    #[test]
    fn conv_matches_a_naive_oracle_with_stride_and_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut conv = Conv2d::new(3, 2, 3, 2, 1);
        for v in conv.weight.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        conv.bias = vec![0.3, -0.2];
        let x = random_tensor(2, 3, 7, 6, &mut rng);
        let y = conv.infer(&x);
        let (oh, ow) = conv.out_size(7, 6);
        assert_eq!((y.h, y.w), (oh, ow));
        for bi in 0..2 {
            for oc in 0..2 {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut want = conv.bias[oc];
                        for ic in 0..3 {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let iy = (oy * 2 + ky) as isize - 1;
                                    let ix = (ox * 2 + kx) as isize - 1;
                                    if (0..7).contains(&iy) && (0..6).contains(&ix) {
                                        want += conv.weight[((oc * 3 + ic) * 3 + ky) * 3 + kx]
                                            * x.at(bi, ic, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        let got = y.at(bi, oc, oy, ox);
                        assert!((got - want).abs() < 1e-12, "({bi},{oc},{oy},{ox})");
                    }
                }
            }
        }
    }

    #[test]
    fn batch_norm_train_output_is_normalized_per_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut bn = BatchNorm2d::new(3);
        let x = random_tensor(4, 3, 6, 5, &mut rng);
        let y = bn.forward(&x, BnMode::Probe);
        for ci in 0..3 {
            let mut sum = 0.0;
            let mut sq = 0.0;
            let mut n = 0.0;
            for bi in 0..4 {
                for &v in y.plane(bi, ci) {
                    sum += v;
                    sq += v * v;
                    n += 1.0;
                }
            }
            let mean = sum / n;
            let var = sq / n - mean * mean;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-4, "var {var}"); // eps shrinks it slightly
        }
        // probe mode left running stats untouched
        assert_eq!(bn.running_mean, vec![0.0; 3]);
        assert_eq!(bn.running_var, vec![1.0; 3]);
    }

    #[test]
    fn batch_norm_inference_is_an_affine_map_of_running_stats() {
        let mut bn = BatchNorm2d::new(1);
        bn.running_mean = vec![2.0];
        bn.running_var = vec![4.0];
        bn.gamma = vec![3.0];
        bn.beta = vec![-1.0];
        let x = Tensor::from_vec(1, 1, 1, 2, vec![2.0, 4.0]);
        let y = bn.infer(&x);
        // (x-2)/sqrt(4+eps) * 3 - 1
        assert!((y.data[0] - -1.0).abs() < 1e-9);
        assert!((y.data[1] - (3.0 * 2.0 / (4.0f64 + 1e-5).sqrt() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn max_pool_picks_window_maxima_and_routes_gradients_back() {
        let x = Tensor::from_vec(
            1,
            1,
            4,
            4,
            vec![
                1.0, 2.0, 0.0, 0.0, //
                3.0, 0.0, 0.0, 4.0, //
                0.0, 0.0, 9.0, 0.0, //
                0.0, 5.0, 0.0, 0.0,
            ],
        );
        let mut pool = MaxPool2d::new(2, 2);
        let y = pool.forward(&x);
        assert_eq!(y.data, vec![3.0, 4.0, 5.0, 9.0]);
        let gy = Tensor::from_vec(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let gx = pool.backward(&gy);
        assert_eq!(gx.at(0, 0, 1, 0), 1.0);
        assert_eq!(gx.at(0, 0, 1, 3), 2.0);
        assert_eq!(gx.at(0, 0, 3, 1), 3.0);
        assert_eq!(gx.at(0, 0, 2, 2), 4.0);
        assert_eq!(gx.data.iter().filter(|&&v| v != 0.0).count(), 4);
    }

    #[test]
    fn global_average_pool_matches_a_naive_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_tensor(3, 5, 7, 2, &mut rng);
        let y = GlobalAvgPool::infer(&x);
        for bi in 0..3 {
            for ci in 0..5 {
                let mut s = 0.0;
                for yy in 0..7 {
                    for xx in 0..2 {
                        s += x.at(bi, ci, yy, xx);
                    }
                }
                assert!((y.data[bi * 5 + ci] - s / 14.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_order_preserves() {
        let logits = Tensor::from_vec(2, 3, 1, 1, vec![1.0, 2.0, 0.5, -40.0, 1000.0, 999.0]);
        let p = softmax(&logits);
        for bi in 0..2 {
            let row = &p.data[bi * 3..(bi + 1) * 3];
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert!(p.data[1] > p.data[0]);
        assert!(p.data[4] > p.data[5]);
    }

    /// Finite-difference check of each primitive in isolation.
    #[test]
    fn layer_backward_passes_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor(2, 2, 6, 6, &mut rng);
        // scalar loss: weighted sum of outputs so the FD probe is 1-D
        let probe_loss = |t: &Tensor, coeffs: &[f64]| -> f64 {
            t.data.iter().zip(coeffs).map(|(a, b)| a * b).sum()
        };

        // conv
        let mut conv = Conv2d::new(2, 3, 3, 1, 1);
        for v in conv.weight.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        let y = conv.forward(&x);
        let coeffs: Vec<f64> = (0..y.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gy = Tensor::from_vec(y.b, y.c, y.h, y.w, coeffs.clone());
        let gx = conv.backward(&gy);
        let eps = 1e-5;
        for probe in [0usize, 7, 31, 70] {
            let mut xp = x.clone();
            xp.data[probe] += eps;
            let up = probe_loss(&conv.infer(&xp), &coeffs);
            xp.data[probe] -= 2.0 * eps;
            let dn = probe_loss(&conv.infer(&xp), &coeffs);
            let fd = (up - dn) / (2.0 * eps);
            assert!((gx.data[probe] - fd).abs() < 1e-6, "conv gx[{probe}]");
        }
        for probe in [0usize, 5, 53] {
            let mut c2 = conv.clone();
            c2.weight[probe] += eps;
            let up = probe_loss(&c2.infer(&x), &coeffs);
            c2.weight[probe] -= 2.0 * eps;
            let dn = probe_loss(&c2.infer(&x), &coeffs);
            let fd = (up - dn) / (2.0 * eps);
            assert!((conv.grad_weight[probe] - fd).abs() < 1e-6, "conv gw[{probe}]");
        }

        // batch norm (probe mode so stats are part of the function)
        let mut bn = BatchNorm2d::new(2);
        bn.gamma = vec![1.3, 0.7];
        bn.beta = vec![0.1, -0.2];
        let y = bn.forward(&x, BnMode::Probe);
        let coeffs: Vec<f64> = (0..y.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gy = Tensor::from_vec(y.b, y.c, y.h, y.w, coeffs.clone());
        let gx = bn.backward(&gy);
        let fd_probe = |xp: &Tensor, bn: &BatchNorm2d| {
            let mut b2 = bn.clone();
            probe_loss(&b2.forward(xp, BnMode::Probe), &coeffs)
        };
        for probe in [0usize, 17, 88, 143] {
            let mut xp = x.clone();
            xp.data[probe] += eps;
            let up = fd_probe(&xp, &bn);
            xp.data[probe] -= 2.0 * eps;
            let dn = fd_probe(&xp, &bn);
            let fd = (up - dn) / (2.0 * eps);
            assert!(
                (gx.data[probe] - fd).abs() < 1e-6,
                "bn gx[{probe}]: {} vs {fd}",
                gx.data[probe]
            );
        }

        // linear
        let xf = random_tensor(3, 4, 1, 1, &mut rng);
        let mut fc = Linear::new(4, 2);
        for v in fc.weight.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        let y = fc.forward(&xf);
        let coeffs: Vec<f64> = (0..y.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gy = Tensor::from_vec(y.b, y.c, 1, 1, coeffs.clone());
        let gx = fc.backward(&gy);
        for probe in 0..xf.data.len() {
            let mut xp = xf.clone();
            xp.data[probe] += eps;
            let up = probe_loss(&fc.infer(&xp), &coeffs);
            xp.data[probe] -= 2.0 * eps;
            let dn = probe_loss(&fc.infer(&xp), &coeffs);
            let fd = (up - dn) / (2.0 * eps);
            assert!((gx.data[probe] - fd).abs() < 1e-7, "fc gx[{probe}]");
        }
    }
}
