//! Bottleneck attention: a channel mask and a time-frequency mask, averaged
//! after the sigmoid and applied as `F'' = F' (1 + M)`.

use rand::Rng;

use super::layers::{clipped_sigmoid, clipped_sigmoid_grad, relu, relu_backward, BatchNorm, BnCache, Conv2d, Linear, Mode};
use super::params::{Grads, Group, ParamStore};
use super::tensor::{FeatureMap3, Tensor4};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BamModule {
    pub channels: usize,
    pub reduction: usize,
    pub fc1: Linear,
    pub fc2: Linear,
    pub bn_c: BatchNorm,
    pub tf_reduce: Conv2d,
    pub tf_dilated: Conv2d,
    pub tf_out: Conv2d,
    pub bn_tf: BatchNorm,
}

pub struct BamCache {
    pooled_c: Tensor4,
    a1: Tensor4,
    r1: Tensor4,
    mc_bn: Option<BnCache>,
    mc: Tensor4,
    pooled_tf: Tensor4,
    t1: Tensor4,
    r_t1: Tensor4,
    t2: Tensor4,
    r_t2: Tensor4,
    tf_bn: Option<BnCache>,
    mtf: Tensor4,
    sc: Vec<f64>,
    stf: Vec<f64>,
    pub mask: Tensor4,
}

impl BamCache {
    /// Pre-activations whose sign (or clip state) determines the local
    /// linear piece of the module.
    pub fn pattern(&self, out: &mut Vec<bool>) {
        out.extend(self.a1.data.iter().map(|v| *v > 0.0));
        out.extend(self.t1.data.iter().map(|v| *v > 0.0));
        out.extend(self.t2.data.iter().map(|v| *v > 0.0));
        out.extend(self.mc.data.iter().chain(&self.mtf.data).map(|v| v.abs() < super::layers::LOGIT_CLIP));
    }

    pub fn bn_caches(&self) -> impl Iterator<Item = &BnCache> {
        self.mc_bn.iter().chain(self.tf_bn.iter())
    }
}

impl BamModule {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, channels: usize, reduction: usize, rng: &mut R) -> Result<Self> {
        if reduction == 0 || channels % reduction != 0 || channels < reduction {
            return invalid(format!("reduction {reduction} must divide channel count {channels}"));
        }
        let hidden = channels / reduction;
        let g = Group::Extractor;
        Ok(Self {
            channels,
            reduction,
            fc1: Linear::new(store, &format!("{name}.fc1"), channels, hidden, true, g, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, channels, false, g, rng),
            bn_c: BatchNorm::new(store, &format!("{name}.bn_c"), channels, g),
            tf_reduce: Conv2d::new(store, &format!("{name}.tf_reduce"), 1, hidden, 1, 1, 1, 0, true, g, rng),
            tf_dilated: Conv2d::new(store, &format!("{name}.tf_dilated"), hidden, hidden, 3, 1, 2, 2, true, g, rng),
            tf_out: Conv2d::new(store, &format!("{name}.tf_out"), hidden, 1, 1, 1, 1, 0, false, g, rng),
            bn_tf: BatchNorm::new(store, &format!("{name}.bn_tf"), 1, g),
        })
    }

    pub fn bns(&self) -> [&BatchNorm; 2] {
        [&self.bn_c, &self.bn_tf]
    }

    /// Returns the refined map and the cache holding the mask.
    pub fn forward(&self, store: &ParamStore, x: &Tensor4, mode: Mode) -> (Tensor4, BamCache) {
        assert_eq!(x.c, self.channels, "BAM channel count");
        let plane = x.plane();
        let mut pooled_c = Tensor4::zeros(x.n, x.c, 1, 1);
        let mut pooled_tf = Tensor4::zeros(x.n, 1, x.h, x.w);
        for n in 0..x.n {
            for c in 0..x.c {
                let off = (n * x.c + c) * plane;
                let s = &x.data[off..off + plane];
                pooled_c.data[n * x.c + c] = s.iter().sum::<f64>() / plane as f64;
                for (p, v) in pooled_tf.data[n * plane..(n + 1) * plane].iter_mut().zip(s) {
                    *p += v / x.c as f64;
                }
            }
        }
        let a1 = self.fc1.forward(store, &pooled_c);
        let r1 = relu(&a1);
        let a2 = self.fc2.forward(store, &r1);
        let (mc, mc_bn) = self.bn_c.forward(store, &a2, mode);

        let t1 = self.tf_reduce.forward(store, &pooled_tf);
        let r_t1 = relu(&t1);
        let t2 = self.tf_dilated.forward(store, &r_t1);
        let r_t2 = relu(&t2);
        let t3 = self.tf_out.forward(store, &r_t2);
        let (mtf, tf_bn) = self.bn_tf.forward(store, &t3, mode);

        let sc: Vec<f64> = mc.data.iter().map(|&v| clipped_sigmoid(v)).collect();
        let stf: Vec<f64> = mtf.data.iter().map(|&v| clipped_sigmoid(v)).collect();
        let mut mask = x.zeros_like();
        let mut out = x.zeros_like();
        for n in 0..x.n {
            for c in 0..x.c {
                let off = (n * x.c + c) * plane;
                let a = sc[n * x.c + c];
                for p in 0..plane {
                    let m = (a + stf[n * plane + p]) / 2.0;
                    mask.data[off + p] = m;
                    out.data[off + p] = x.data[off + p] * (1.0 + m);
                }
            }
        }
        let cache = BamCache {
            pooled_c,
            a1,
            r1,
            mc_bn,
            mc,
            pooled_tf,
            t1,
            r_t1,
            t2,
            r_t2,
            tf_bn,
            mtf,
            sc,
            stf,
            mask,
        };
        (out, cache)
    }

    pub fn backward(&self, store: &ParamStore, x: &Tensor4, cache: &BamCache, dy: &Tensor4, grads: &mut Grads) -> Tensor4 {
        let plane = x.plane();
        let mut dx = x.zeros_like();
        let mut dsc = vec![0.0; x.n * x.c];
        let mut dstf = vec![0.0; x.n * plane];
        for n in 0..x.n {
            for c in 0..x.c {
                let off = (n * x.c + c) * plane;
                let mut acc = 0.0;
                for p in 0..plane {
                    let g = dy.data[off + p];
                    dx.data[off + p] = g * (1.0 + cache.mask.data[off + p]);
                    let dm = g * x.data[off + p] / 2.0;
                    acc += dm;
                    dstf[n * plane + p] += dm;
                }
                dsc[n * x.c + c] = acc;
            }
        }
        let mut dmc = cache.mc.zeros_like();
        for i in 0..dsc.len() {
            dmc.data[i] = dsc[i] * clipped_sigmoid_grad(cache.mc.data[i], cache.sc[i]);
        }
        let mut dmtf = cache.mtf.zeros_like();
        for i in 0..dstf.len() {
            dmtf.data[i] = dstf[i] * clipped_sigmoid_grad(cache.mtf.data[i], cache.stf[i]);
        }

        let da2 = match &cache.mc_bn {
            Some(bc) => self.bn_c.backward(store, bc, &dmc, grads),
            None => eval_bn_backward(store, &self.bn_c, &dmc),
        };
        let dr1 = self.fc2.backward(store, &cache.r1, &da2, grads);
        let da1 = relu_backward(&cache.a1, &dr1);
        let dpc = self.fc1.backward(store, &cache.pooled_c, &da1, grads);

        let dt3 = match &cache.tf_bn {
            Some(bc) => self.bn_tf.backward(store, bc, &dmtf, grads),
            None => eval_bn_backward(store, &self.bn_tf, &dmtf),
        };
        let dr_t2 = self.tf_out.backward(store, &cache.r_t2, &dt3, grads);
        let dt2 = relu_backward(&cache.t2, &dr_t2);
        let dr_t1 = self.tf_dilated.backward(store, &cache.r_t1, &dt2, grads);
        let dt1 = relu_backward(&cache.t1, &dr_t1);
        let dptf = self.tf_reduce.backward(store, &cache.pooled_tf, &dt1, grads);

        for n in 0..x.n {
            for c in 0..x.c {
                let off = (n * x.c + c) * plane;
                let gc = dpc.data[n * x.c + c] / plane as f64;
                for p in 0..plane {
                    dx.data[off + p] += gc + dptf.data[n * plane + p] / x.c as f64;
                }
            }
        }
        dx
    }
}

/// Input gradient of a batch norm evaluated with running statistics.
fn eval_bn_backward(store: &ParamStore, bn: &BatchNorm, dy: &Tensor4) -> Tensor4 {
    let g = store.get(bn.gamma);
    let rv = store.get(bn.running_var);
    let plane = dy.plane();
    let mut dx = dy.clone();
    for n in 0..dy.n {
        for c in 0..dy.c {
            let s = g[c] / (rv[c] + super::layers::BN_EPS).sqrt();
            let off = (n * dy.c + c) * plane;
            dx.data[off..off + plane].iter_mut().for_each(|v| *v *= s);
        }
    }
    dx
}

/// Applies a BAM module to one feature map using running batch-norm
/// statistics. Returns the refined map and the mask.
pub fn bam_forward(fmap: &FeatureMap3, bam: &BamModule, store: &ParamStore) -> Result<(FeatureMap3, FeatureMap3)> {
    if fmap.channels != bam.channels {
        return Err(Error::ShapeMismatch(format!(
            "feature map has {} channels, module expects {}",
            fmap.channels, bam.channels
        )));
    }
    let (out, cache) = bam.forward(store, &fmap.to_tensor(), Mode::Eval);
    Ok((FeatureMap3::from_tensor(&out), FeatureMap3::from_tensor(&cache.mask)))
}
