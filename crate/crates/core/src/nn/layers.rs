//! Layer primitives with explicit forward and backward passes.

use rand::Rng;

use super::params::{Grads, Group, ParamId, ParamStore};
use super::tensor::Tensor4;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm.
    Train,
    /// Running statistics in batch norm.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        pad: usize,
        bias: bool,
        group: Group,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_he(
            &format!("{name}.weight"),
            &[out_ch, in_ch, kernel, kernel],
            in_ch * kernel * kernel,
            group,
            rng,
        );
        let bias = bias.then(|| store.add_const(&format!("{name}.bias"), &[out_ch], 0.0, group, true));
        Self {
            weight,
            bias,
            in_ch,
            out_ch,
            kernel,
            stride,
            dilation,
            pad,
        }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let span = self.dilation * (self.kernel - 1) + 1;
        let o = |n: usize| (n + 2 * self.pad - span) / self.stride + 1;
        (o(h), o(w))
    }

    /// Range of output positions whose input index `o * stride + k * dilation - pad`
    /// falls inside `0..n`.
    fn valid(&self, k: usize, n: usize, out: usize) -> (usize, usize) {
        let off = (k * self.dilation) as isize - self.pad as isize;
        let s = self.stride as isize;
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        let hi = (n as isize - 1 - off).div_euclid(s) + 1;
        let hi = hi.clamp(0, out as isize);
        (lo.min(hi) as usize, hi as usize)
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor4) -> Tensor4 {
        assert_eq!(x.c, self.in_ch, "conv input channels");
        let (oh, ow) = self.out_size(x.h, x.w);
        let w = store.get(self.weight);
        let b = self.bias.map(|id| store.get(id));
        let k = self.kernel;
        let samples = par::map_range(x.n, |n| {
            let xs = x.sample(n);
            let mut y = vec![0.0; self.out_ch * oh * ow];
            for o in 0..self.out_ch {
                let yo = &mut y[o * oh * ow..(o + 1) * oh * ow];
                if let Some(b) = b {
                    yo.iter_mut().for_each(|v| *v = b[o]);
                }
                for i in 0..self.in_ch {
                    let xi = &xs[i * x.h * x.w..(i + 1) * x.h * x.w];
                    for kh in 0..k {
                        let (h0, h1) = self.valid(kh, x.h, oh);
                        for kw in 0..k {
                            let wv = w[((o * self.in_ch + i) * k + kh) * k + kw];
                            if wv == 0.0 {
                                continue;
                            }
                            let (w0, w1) = self.valid(kw, x.w, ow);
                            for r in h0..h1 {
                                let ih = r * self.stride + kh * self.dilation - self.pad;
                                let xrow = &xi[ih * x.w..(ih + 1) * x.w];
                                let yrow = &mut yo[r * ow..(r + 1) * ow];
                                for col in w0..w1 {
                                    let iw = col * self.stride + kw * self.dilation - self.pad;
                                    yrow[col] += wv * xrow[iw];
                                }
                            }
                        }
                    }
                }
            }
            y
        });
        Tensor4 {
            n: x.n,
            c: self.out_ch,
            h: oh,
            w: ow,
            data: samples.concat(),
        }
    }

    /// Accumulates weight and bias gradients and returns the input gradient.
    pub fn backward(&self, store: &ParamStore, x: &Tensor4, dy: &Tensor4, grads: &mut Grads) -> Tensor4 {
        let (oh, ow) = (dy.h, dy.w);
        let w = store.get(self.weight);
        let k = self.kernel;
        let per_sample = par::map_range(x.n, |n| {
            let xs = x.sample(n);
            let ds = dy.sample(n);
            let mut dx = vec![0.0; x.sample_len()];
            let mut dw = vec![0.0; w.len()];
            for o in 0..self.out_ch {
                let dyo = &ds[o * oh * ow..(o + 1) * oh * ow];
                for i in 0..self.in_ch {
                    let base = i * x.h * x.w;
                    for kh in 0..k {
                        let (h0, h1) = self.valid(kh, x.h, oh);
                        for kw in 0..k {
                            let wi = ((o * self.in_ch + i) * k + kh) * k + kw;
                            let wv = w[wi];
                            let (w0, w1) = self.valid(kw, x.w, ow);
                            let mut acc = 0.0;
                            for r in h0..h1 {
                                let ih = r * self.stride + kh * self.dilation - self.pad;
                                let row = base + ih * x.w;
                                let dyrow = &dyo[r * ow..(r + 1) * ow];
                                for col in w0..w1 {
                                    let iw = col * self.stride + kw * self.dilation - self.pad;
                                    acc += dyrow[col] * xs[row + iw];
                                    dx[row + iw] += wv * dyrow[col];
                                }
                            }
                            dw[wi] += acc;
                        }
                    }
                }
            }
            let db: Vec<f64> = (0..self.out_ch)
                .map(|o| ds[o * oh * ow..(o + 1) * oh * ow].iter().sum())
                .collect();
            (dx, dw, db)
        });
        let mut dx = Vec::with_capacity(x.data.len());
        for (sx, sw, sb) in &per_sample {
            dx.extend_from_slice(sx);
            grads.add(self.weight, sw);
            if let Some(b) = self.bias {
                grads.add(b, sb);
            }
        }
        Tensor4 {
            n: x.n,
            c: x.c,
            h: x.h,
            w: x.w,
            data: dx,
        }
    }
}

/// Batch norm over all axes but the channel axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    /// Unbiased batch variance, for the running estimate.
    pub var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, group: Group) -> Self {
        Self {
            gamma: store.add_const(&format!("{name}.gamma"), &[channels], 1.0, group, true),
            beta: store.add_const(&format!("{name}.beta"), &[channels], 0.0, group, true),
            running_mean: store.add_const(&format!("{name}.running_mean"), &[channels], 0.0, group, false),
            running_var: store.add_const(&format!("{name}.running_var"), &[channels], 1.0, group, false),
            channels,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor4, mode: Mode) -> (Tensor4, Option<BnCache>) {
        assert_eq!(x.c, self.channels, "batch norm channels");
        let g = store.get(self.gamma);
        let b = store.get(self.beta);
        let plane = x.plane();
        let m = (x.n * plane) as f64;
        let mut y = x.zeros_like();
        match mode {
            Mode::Eval => {
                let rm = store.get(self.running_mean);
                let rv = store.get(self.running_var);
                for n in 0..x.n {
                    for c in 0..x.c {
                        let s = 1.0 / (rv[c] + BN_EPS).sqrt();
                        let off = (n * x.c + c) * plane;
                        for i in off..off + plane {
                            y.data[i] = g[c] * (x.data[i] - rm[c]) * s + b[c];
                        }
                    }
                }
                (y, None)
            }
            Mode::Train => {
                let mut xhat = vec![0.0; x.data.len()];
                let mut inv_std = vec![0.0; x.c];
                let mut means = vec![0.0; x.c];
                let mut vars = vec![0.0; x.c];
                for c in 0..x.c {
                    let mut sum = 0.0;
                    for n in 0..x.n {
                        let off = (n * x.c + c) * plane;
                        sum += x.data[off..off + plane].iter().sum::<f64>();
                    }
                    let mean = sum / m;
                    let mut sq = 0.0;
                    for n in 0..x.n {
                        let off = (n * x.c + c) * plane;
                        sq += x.data[off..off + plane].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
                    }
                    let var = sq / m;
                    let s = 1.0 / (var + BN_EPS).sqrt();
                    for n in 0..x.n {
                        let off = (n * x.c + c) * plane;
                        for i in off..off + plane {
                            xhat[i] = (x.data[i] - mean) * s;
                            y.data[i] = g[c] * xhat[i] + b[c];
                        }
                    }
                    inv_std[c] = s;
                    means[c] = mean;
                    vars[c] = if m > 1.0 { sq / (m - 1.0) } else { var };
                }
                (
                    y,
                    Some(BnCache {
                        xhat,
                        inv_std,
                        mean: means,
                        var: vars,
                    }),
                )
            }
        }
    }

    pub fn backward(&self, store: &ParamStore, cache: &BnCache, dy: &Tensor4, grads: &mut Grads) -> Tensor4 {
        let g = store.get(self.gamma);
        let plane = dy.plane();
        let m = (dy.n * plane) as f64;
        let mut dx = dy.zeros_like();
        let mut dgamma = vec![0.0; dy.c];
        let mut dbeta = vec![0.0; dy.c];
        for c in 0..dy.c {
            let (mut sb, mut sg) = (0.0, 0.0);
            for n in 0..dy.n {
                let off = (n * dy.c + c) * plane;
                for i in off..off + plane {
                    sb += dy.data[i];
                    sg += dy.data[i] * cache.xhat[i];
                }
            }
            dbeta[c] = sb;
            dgamma[c] = sg;
            let k = g[c] * cache.inv_std[c] / m;
            for n in 0..dy.n {
                let off = (n * dy.c + c) * plane;
                for i in off..off + plane {
                    dx.data[i] = k * (m * dy.data[i] - sb - cache.xhat[i] * sg);
                }
            }
        }
        grads.add(self.gamma, &dgamma);
        grads.add(self.beta, &dbeta);
        dx
    }

    pub fn update_running(&self, store: &mut ParamStore, cache: &BnCache) {
        let rm = store.get_mut(self.running_mean);
        for (r, v) in rm.iter_mut().zip(&cache.mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
        }
        let rv = store.get_mut(self.running_var);
        for (r, v) in rv.iter_mut().zip(&cache.var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
        }
    }
}

/// Fully connected layer on vector-shaped tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        group: Group,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_he(&format!("{name}.weight"), &[out_dim, in_dim], in_dim, group, rng);
        let bias = bias.then(|| store.add_const(&format!("{name}.bias"), &[out_dim], 0.0, group, true));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor4) -> Tensor4 {
        assert_eq!(x.sample_len(), self.in_dim, "linear input size");
        let w = store.get(self.weight);
        let b = self.bias.map(|id| store.get(id));
        let mut y = Tensor4::zeros(x.n, self.out_dim, 1, 1);
        for n in 0..x.n {
            let xs = x.sample(n);
            for o in 0..self.out_dim {
                let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = b.map_or(0.0, |b| b[o]);
                for (a, v) in row.iter().zip(xs) {
                    acc += a * v;
                }
                y.data[n * self.out_dim + o] = acc;
            }
        }
        y
    }

    pub fn backward(&self, store: &ParamStore, x: &Tensor4, dy: &Tensor4, grads: &mut Grads) -> Tensor4 {
        let w = store.get(self.weight);
        let mut dx = x.zeros_like();
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; self.out_dim];
        for n in 0..x.n {
            let xs = x.sample(n);
            let dxs = &mut dx.data[n * self.in_dim..(n + 1) * self.in_dim];
            for o in 0..self.out_dim {
                let g = dy.data[n * self.out_dim + o];
                db[o] += g;
                let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
                let drow = &mut dw[o * self.in_dim..(o + 1) * self.in_dim];
                for j in 0..self.in_dim {
                    drow[j] += g * xs[j];
                    dxs[j] += g * row[j];
                }
            }
        }
        grads.add(self.weight, &dw);
        if let Some(b) = self.bias {
            grads.add(b, &db);
        }
        dx
    }
}

pub fn relu(x: &Tensor4) -> Tensor4 {
    x.map(|v| v.max(0.0))
}

/// Passes `dy` where the pre-activation `x` was positive.
pub fn relu_backward(x: &Tensor4, dy: &Tensor4) -> Tensor4 {
    let mut d = dy.clone();
    for (g, &v) in d.data.iter_mut().zip(&x.data) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    d
}

/// Attention logits are clipped here before the sigmoid so that masks stay
/// strictly inside (0, 1) in double precision.
pub const LOGIT_CLIP: f64 = 30.0;

pub fn clipped_sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v.clamp(-LOGIT_CLIP, LOGIT_CLIP)).exp())
}

/// Derivative of `clipped_sigmoid` given its input and output.
pub fn clipped_sigmoid_grad(v: f64, s: f64) -> f64 {
    if v.abs() > LOGIT_CLIP {
        0.0
    } else {
        s * (1.0 - s)
    }
}

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits. Also returns per-sample losses.
pub fn softmax_cross_entropy(logits: &Tensor4, labels: &[usize]) -> (f64, Vec<f64>, Tensor4) {
    let k = logits.sample_len();
    let n = logits.n;
    let mut grad = logits.zeros_like();
    let mut losses = Vec::with_capacity(n);
    for i in 0..n {
        let z = logits.sample(i);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - m).exp()).sum();
        let lse = m + sum.ln();
        losses.push(lse - z[labels[i]]);
        for j in 0..k {
            let p = (z[j] - lse).exp();
            grad.data[i * k + j] = (p - if j == labels[i] { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    let mean = losses.iter().sum::<f64>() / n as f64;
    (mean, losses, grad)
}
