use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bam::{BamCache, BamModule};
use super::layers::{relu, relu_backward, softmax_cross_entropy, BatchNorm, BnCache, Conv2d, Linear, Mode};
use super::params::{Grads, Group, ParamStore};
use super::tensor::Tensor4;
use crate::error::{invalid, Error, Result};

/// Standard deviations in statistic pooling are floored here.
pub const STD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockConfig {
    pub mid: usize,
    pub out: usize,
    pub stride: usize,
    pub bam: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroNetConfig {
    /// Crop length in frames.
    pub input_frames: usize,
    /// Feature dimension per frame.
    pub input_bins: usize,
    pub stem_channels: usize,
    pub blocks: Vec<BlockConfig>,
    pub bam_reduction: usize,
    pub embedding_dim: usize,
    pub num_speakers: usize,
    pub domain_hidden: usize,
    pub seed: u64,
}

impl Default for MicroNetConfig {
    fn default() -> Self {
        Self {
            input_frames: 256,
            input_bins: 30,
            stem_channels: 8,
            blocks: vec![
                BlockConfig { mid: 4, out: 16, stride: 1, bam: true },
                BlockConfig { mid: 8, out: 32, stride: 2, bam: true },
            ],
            bam_reduction: 4,
            embedding_dim: 64,
            num_speakers: 2,
            domain_hidden: 32,
            seed: 0,
        }
    }
}

impl MicroNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_frames == 0 || self.input_bins == 0 || self.stem_channels == 0 {
            return invalid("input shape and stem width must be positive");
        }
        if self.embedding_dim == 0 || self.domain_hidden == 0 {
            return invalid("embedding and domain hidden sizes must be positive");
        }
        if self.num_speakers < 2 {
            return invalid("at least two speakers are needed");
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.mid == 0 || b.out == 0 || b.stride == 0 {
                return invalid(format!("block {i}: sizes must be positive"));
            }
            if b.bam && (self.bam_reduction == 0 || b.out % self.bam_reduction != 0 || b.out < self.bam_reduction) {
                return invalid(format!(
                    "block {i}: BAM reduction {} must divide {} channels",
                    self.bam_reduction, b.out
                ));
            }
        }
        Ok(())
    }

    /// Channels and spatial size reaching the pooling layer.
    pub fn pooled_shape(&self) -> (usize, usize, usize) {
        let mut c = self.stem_channels;
        let (mut h, mut w) = (self.input_frames, self.input_bins);
        for b in &self.blocks {
            c = b.out;
            h = (h - 1) / b.stride + 1;
            w = (w - 1) / b.stride + 1;
        }
        (c, h, w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bottleneck {
    pub reduce: Conv2d,
    pub bn1: BatchNorm,
    pub conv: Conv2d,
    pub bn2: BatchNorm,
    pub expand: Conv2d,
    pub bn3: BatchNorm,
    pub shortcut: Option<(Conv2d, BatchNorm)>,
    pub bam: Option<BamModule>,
}

struct BlockCache {
    x: Tensor4,
    bn1: Option<BnCache>,
    z1: Tensor4,
    r1: Tensor4,
    bn2: Option<BnCache>,
    z2: Tensor4,
    r2: Tensor4,
    bn3: Option<BnCache>,
    sc_bn: Option<BnCache>,
    sum: Tensor4,
    out: Tensor4,
    bam: Option<BamCache>,
}

impl Bottleneck {
    fn forward(&self, s: &ParamStore, x: &Tensor4, mode: Mode) -> (Tensor4, BlockCache) {
        let a1 = self.reduce.forward(s, x);
        let (z1, bn1) = self.bn1.forward(s, &a1, mode);
        let r1 = relu(&z1);
        let a2 = self.conv.forward(s, &r1);
        let (z2, bn2) = self.bn2.forward(s, &a2, mode);
        let r2 = relu(&z2);
        let a3 = self.expand.forward(s, &r2);
        let (mut sum, bn3) = self.bn3.forward(s, &a3, mode);
        let sc_bn = match &self.shortcut {
            Some((conv, bn)) => {
                let a = conv.forward(s, x);
                let (z, c) = bn.forward(s, &a, mode);
                sum.add_assign(&z);
                c
            }
            None => {
                sum.add_assign(x);
                None
            }
        };
        let out = relu(&sum);
        let (y, bam) = match &self.bam {
            Some(b) => {
                let (y, c) = b.forward(s, &out, mode);
                (y, Some(c))
            }
            None => (out.clone(), None),
        };
        let cache = BlockCache {
            x: x.clone(),
            bn1,
            z1,
            r1,
            bn2,
            z2,
            r2,
            bn3,
            sc_bn,
            sum,
            out,
            bam,
        };
        (y, cache)
    }

    fn backward(&self, s: &ParamStore, c: &BlockCache, dy: &Tensor4, g: &mut Grads) -> Tensor4 {
        let d_out = match (&self.bam, &c.bam) {
            (Some(b), Some(bc)) => b.backward(s, &c.out, bc, dy, g),
            _ => dy.clone(),
        };
        let d_sum = relu_backward(&c.sum, &d_out);
        let d_a3 = self.bn3.backward(s, c.bn3.as_ref().expect("training cache"), &d_sum, g);
        let d_r2 = self.expand.backward(s, &c.r2, &d_a3, g);
        let d_z2 = relu_backward(&c.z2, &d_r2);
        let d_a2 = self.bn2.backward(s, c.bn2.as_ref().expect("training cache"), &d_z2, g);
        let d_r1 = self.conv.backward(s, &c.r1, &d_a2, g);
        let d_z1 = relu_backward(&c.z1, &d_r1);
        let d_a1 = self.bn1.backward(s, c.bn1.as_ref().expect("training cache"), &d_z1, g);
        let mut dx = self.reduce.backward(s, &c.x, &d_a1, g);
        match &self.shortcut {
            Some((conv, bn)) => {
                let d_a = bn.backward(s, c.sc_bn.as_ref().expect("training cache"), &d_sum, g);
                dx.add_assign(&conv.backward(s, &c.x, &d_a, g));
            }
            None => dx.add_assign(&d_sum),
        }
        dx
    }

    fn bn_pairs<'a>(&'a self, c: &'a BlockCache) -> Vec<(&'a BatchNorm, &'a BnCache)> {
        let mut v = Vec::new();
        let mut push = |bn: &'a BatchNorm, cache: &'a Option<BnCache>| {
            if let Some(cache) = cache {
                v.push((bn, cache));
            }
        };
        push(&self.bn1, &c.bn1);
        push(&self.bn2, &c.bn2);
        push(&self.bn3, &c.bn3);
        if let Some((_, bn)) = &self.shortcut {
            push(bn, &c.sc_bn);
        }
        if let (Some(b), Some(bc)) = (&self.bam, &c.bam) {
            for (bn, cache) in b.bns().into_iter().zip(bc.bn_caches()) {
                v.push((bn, cache));
            }
        }
        v
    }
}

/// Per-channel mean and population standard deviation over the time axis
/// (`h`), with `(c, w)` flattened into channels. Output is `[means; stds]`.
pub fn stat_pool(x: &Tensor4) -> Result<Tensor4> {
    if x.h == 0 {
        return Err(Error::TooShort("statistic pooling over an empty time axis".into()));
    }
    let d = x.c * x.w;
    let mut out = Tensor4::zeros(x.n, 2 * d, 1, 1);
    let t = x.h as f64;
    for n in 0..x.n {
        for c in 0..x.c {
            for f in 0..x.w {
                let mut sum = 0.0;
                for h in 0..x.h {
                    sum += x.at(n, c, h, f);
                }
                let mean = sum / t;
                let mut sq = 0.0;
                for h in 0..x.h {
                    let v = x.at(n, c, h, f) - mean;
                    sq += v * v;
                }
                let std = (sq / t).sqrt().max(STD_FLOOR);
                out.data[n * 2 * d + c * x.w + f] = mean;
                out.data[n * 2 * d + d + c * x.w + f] = std;
            }
        }
    }
    Ok(out)
}

fn stat_pool_backward(x: &Tensor4, pooled: &Tensor4, dy: &Tensor4) -> Tensor4 {
    let d = x.c * x.w;
    let t = x.h as f64;
    let mut dx = x.zeros_like();
    for n in 0..x.n {
        for c in 0..x.c {
            for f in 0..x.w {
                let k = c * x.w + f;
                let mean = pooled.data[n * 2 * d + k];
                let std = pooled.data[n * 2 * d + d + k];
                let gm = dy.data[n * 2 * d + k] / t;
                let gs = dy.data[n * 2 * d + d + k];
                let active = std > STD_FLOOR;
                for h in 0..x.h {
                    let i = x.idx(n, c, h, f);
                    let mut g = gm;
                    if active {
                        g += gs * (x.data[i] - mean) / (t * std);
                    }
                    dx.data[i] = g;
                }
            }
        }
    }
    dx
}

/// Forward of the gradient reversal layer: identity.
pub fn grl_forward(x: &[f64]) -> Vec<f64> {
    x.to_vec()
}

/// Backward of the gradient reversal layer: `-lambda * gradient`.
pub fn grl_backward(gradient: &[f64], lambda: f64) -> Vec<f64> {
    gradient.iter().map(|g| -lambda * g).collect()
}

/// `mean(L_y) - lambda * mean(L_d)`.
pub fn dat_loss(speaker_losses: &[f64], domain_losses: &[f64], lambda: f64) -> Result<f64> {
    if speaker_losses.is_empty() {
        return invalid("empty batch");
    }
    if speaker_losses.len() != domain_losses.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} speaker losses vs {} domain losses",
            speaker_losses.len(),
            domain_losses.len()
        )));
    }
    let n = speaker_losses.len() as f64;
    Ok(speaker_losses.iter().sum::<f64>() / n - lambda * domain_losses.iter().sum::<f64>() / n)
}

/// Micro ResNet with optional BAM after each block, statistic pooling, an
/// embedding layer, a speaker head and a domain head behind gradient reversal.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroNet {
    pub config: MicroNetConfig,
    pub store: ParamStore,
    pub stem: Conv2d,
    pub stem_bn: BatchNorm,
    pub blocks: Vec<Bottleneck>,
    pub embed: Linear,
    pub speaker: Linear,
    pub domain_fc1: Linear,
    pub domain_fc2: Linear,
}

/// Network outputs for a batch.
#[derive(Debug, Clone)]
pub struct Outputs {
    pub embeddings: Tensor4,
    pub speaker_logits: Tensor4,
    pub domain_logits: Tensor4,
}

pub struct ForwardCache {
    input: Tensor4,
    stem_bn: Option<BnCache>,
    stem_z: Tensor4,
    blocks: Vec<BlockCache>,
    features: Tensor4,
    pooled: Tensor4,
    domain_a: Tensor4,
    domain_r: Tensor4,
}

impl ForwardCache {
    /// Signs of every rectifier input and the clip state of every attention
    /// logit. Two parameter settings with equal patterns lie on the same
    /// smooth piece of the loss.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut v: Vec<bool> = self.stem_z.data.iter().map(|x| *x > 0.0).collect();
        for b in &self.blocks {
            for t in [&b.z1, &b.z2, &b.sum] {
                v.extend(t.data.iter().map(|x| *x > 0.0));
            }
            if let Some(bc) = &b.bam {
                bc.pattern(&mut v);
            }
        }
        v.extend(self.domain_a.data.iter().map(|x| *x > 0.0));
        v
    }
}

/// Loss terms of one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub speaker: f64,
    pub domain: Option<f64>,
    /// `speaker - lambda * domain`.
    pub total: f64,
    pub speaker_accuracy: f64,
}

impl MicroNet {
    pub fn new(config: MicroNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut s = ParamStore::new();
        let ex = Group::Extractor;
        let stem = Conv2d::new(&mut s, "stem", 1, config.stem_channels, 3, 1, 1, 1, false, ex, &mut rng);
        let stem_bn = BatchNorm::new(&mut s, "stem.bn", config.stem_channels, ex);
        let mut blocks = Vec::new();
        let mut ch = config.stem_channels;
        for (i, b) in config.blocks.iter().enumerate() {
            let p = format!("block{i}");
            let reduce = Conv2d::new(&mut s, &format!("{p}.reduce"), ch, b.mid, 1, 1, 1, 0, false, ex, &mut rng);
            let bn1 = BatchNorm::new(&mut s, &format!("{p}.bn1"), b.mid, ex);
            let conv = Conv2d::new(&mut s, &format!("{p}.conv"), b.mid, b.mid, 3, b.stride, 1, 1, false, ex, &mut rng);
            let bn2 = BatchNorm::new(&mut s, &format!("{p}.bn2"), b.mid, ex);
            let expand = Conv2d::new(&mut s, &format!("{p}.expand"), b.mid, b.out, 1, 1, 1, 0, false, ex, &mut rng);
            let bn3 = BatchNorm::new(&mut s, &format!("{p}.bn3"), b.out, ex);
            let shortcut = (ch != b.out || b.stride != 1).then(|| {
                (
                    Conv2d::new(&mut s, &format!("{p}.shortcut"), ch, b.out, 1, b.stride, 1, 0, false, ex, &mut rng),
                    BatchNorm::new(&mut s, &format!("{p}.shortcut.bn"), b.out, ex),
                )
            });
            let bam = if b.bam {
                Some(BamModule::new(&mut s, &format!("{p}.bam"), b.out, config.bam_reduction, &mut rng)?)
            } else {
                None
            };
            blocks.push(Bottleneck {
                reduce,
                bn1,
                conv,
                bn2,
                expand,
                bn3,
                shortcut,
                bam,
            });
            ch = b.out;
        }
        let (c, _, w) = config.pooled_shape();
        let e = config.embedding_dim;
        let embed = Linear::new(&mut s, "embed", 2 * c * w, e, true, ex, &mut rng);
        let speaker = Linear::new(&mut s, "speaker", e, config.num_speakers, true, Group::Speaker, &mut rng);
        let domain_fc1 = Linear::new(&mut s, "domain.fc1", e, config.domain_hidden, true, Group::Domain, &mut rng);
        let domain_fc2 = Linear::new(&mut s, "domain.fc2", config.domain_hidden, 2, true, Group::Domain, &mut rng);
        Ok(Self {
            config,
            store: s,
            stem,
            stem_bn,
            blocks,
            embed,
            speaker,
            domain_fc1,
            domain_fc2,
        })
    }

    pub fn check_input(&self, x: &Tensor4) -> Result<()> {
        if x.c != 1 || x.h != self.config.input_frames || x.w != self.config.input_bins {
            return Err(Error::ShapeMismatch(format!(
                "input {}x{}x{}, network expects 1x{}x{}",
                x.c, x.h, x.w, self.config.input_frames, self.config.input_bins
            )));
        }
        if x.n == 0 {
            return invalid("empty batch");
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor4, mode: Mode) -> Result<(Outputs, ForwardCache)> {
        self.check_input(x)?;
        let s = &self.store;
        let stem_a = self.stem.forward(s, x);
        let (stem_z, stem_bn) = self.stem_bn.forward(s, &stem_a, mode);
        let stem_out = relu(&stem_z);
        let mut h = stem_out;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = b.forward(s, &h, mode);
            caches.push(c);
            h = y;
        }
        let pooled = stat_pool(&h)?;
        let embeddings = self.embed.forward(s, &pooled);
        let speaker_logits = self.speaker.forward(s, &embeddings);
        let domain_a = self.domain_fc1.forward(s, &embeddings);
        let domain_r = relu(&domain_a);
        let domain_logits = self.domain_fc2.forward(s, &domain_r);
        if !embeddings.is_finite() || !speaker_logits.is_finite() {
            return Err(Error::Numerical("non-finite network output".into()));
        }
        Ok((
            Outputs {
                embeddings,
                speaker_logits,
                domain_logits,
            },
            ForwardCache {
                input: x.clone(),
                stem_bn,
                stem_z,
                blocks: caches,
                features: h,
                pooled,
                domain_a,
                domain_r,
            },
        ))
    }

    /// Embeddings with running batch-norm statistics.
    pub fn embed_batch(&self, x: &Tensor4) -> Result<Tensor4> {
        Ok(self.forward(x, Mode::Eval)?.0.embeddings)
    }

    /// Training-mode losses without gradients.
    pub fn losses(&self, x: &Tensor4, speakers: &[usize], domains: Option<&[usize]>, lambda: f64) -> Result<LossReport> {
        Ok(self.evaluate(x, speakers, domains, lambda)?.0)
    }

    /// Training-mode losses and the forward cache.
    pub fn evaluate(
        &self,
        x: &Tensor4,
        speakers: &[usize],
        domains: Option<&[usize]>,
        lambda: f64,
    ) -> Result<(LossReport, ForwardCache)> {
        let (out, cache) = self.forward(x, Mode::Train)?;
        Ok((self.report(&out, speakers, domains, lambda)?.0, cache))
    }

    fn report(
        &self,
        out: &Outputs,
        speakers: &[usize],
        domains: Option<&[usize]>,
        lambda: f64,
    ) -> Result<(LossReport, Tensor4, Option<Tensor4>)> {
        let n = out.embeddings.n;
        if speakers.len() != n || domains.is_some_and(|d| d.len() != n) {
            return Err(Error::ShapeMismatch("labels vs batch".into()));
        }
        if speakers.iter().any(|&y| y >= self.config.num_speakers) || domains.is_some_and(|d| d.iter().any(|&v| v > 1)) {
            return invalid("label out of range");
        }
        let (ly, _, gy) = softmax_cross_entropy(&out.speaker_logits, speakers);
        let correct = (0..n)
            .filter(|&i| {
                let z = out.speaker_logits.sample(i);
                argmax(z) == speakers[i]
            })
            .count();
        let (ld, gd) = match domains {
            Some(d) => {
                let (l, _, g) = softmax_cross_entropy(&out.domain_logits, d);
                (Some(l), Some(g))
            }
            None => (None, None),
        };
        let total = ly - lambda * ld.unwrap_or(0.0);
        if !total.is_finite() {
            return Err(Error::Numerical("loss is not finite".into()));
        }
        Ok((
            LossReport {
                speaker: ly,
                domain: ld,
                total,
                speaker_accuracy: correct as f64 / n as f64,
            },
            gy,
            gd,
        ))
    }

    /// Training-mode forward and backward. Extractor parameters receive the
    /// gradient of `L_y - lambda * L_d` (the domain term arriving through
    /// gradient reversal); the speaker head receives that of `L_y` and the
    /// domain head that of `L_d`.
    pub fn loss_and_grads(
        &self,
        x: &Tensor4,
        speakers: &[usize],
        domains: Option<&[usize]>,
        lambda: f64,
    ) -> Result<(LossReport, Grads, ForwardCache)> {
        let (out, cache) = self.forward(x, Mode::Train)?;
        let (report, gy, gd) = self.report(&out, speakers, domains, lambda)?;
        let s = &self.store;
        let mut g = s.zero_grads();
        let mut d_emb = self.speaker.backward(s, &out.embeddings, &gy, &mut g);
        if let Some(gd) = gd {
            let d_r = self.domain_fc2.backward(s, &cache.domain_r, &gd, &mut g);
            let d_a = relu_backward(&cache.domain_a, &d_r);
            let d_z = self.domain_fc1.backward(s, &out.embeddings, &d_a, &mut g);
            let reversed = grl_backward(&d_z.data, lambda);
            for (a, b) in d_emb.data.iter_mut().zip(&reversed) {
                *a += b;
            }
        }
        let d_pool = self.embed.backward(s, &cache.pooled, &d_emb, &mut g);
        let mut d = stat_pool_backward(&cache.features, &cache.pooled, &d_pool);
        for (b, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            d = b.backward(s, c, &d, &mut g);
        }
        let d_z = relu_backward(&cache.stem_z, &d);
        let d_a = self.stem_bn.backward(s, cache.stem_bn.as_ref().expect("training cache"), &d_z, &mut g);
        self.stem.backward(s, &cache.input, &d_a, &mut g);
        Ok((report, g, cache))
    }

    /// Extra SGD steps on the domain head alone, fitted to embeddings
    /// recomputed from the pooled statistics in `cache`. Returns the domain
    /// loss before each step.
    pub fn domain_head_steps(&mut self, cache: &ForwardCache, domains: &[usize], lr: f64, steps: usize) -> Vec<f64> {
        let emb = self.embed.forward(&self.store, &cache.pooled);
        let mut losses = Vec::with_capacity(steps);
        for _ in 0..steps {
            let s = &self.store;
            let a = self.domain_fc1.forward(s, &emb);
            let r = relu(&a);
            let logits = self.domain_fc2.forward(s, &r);
            let (loss, _, gd) = softmax_cross_entropy(&logits, domains);
            let mut g = s.zero_grads();
            let d_r = self.domain_fc2.backward(s, &r, &gd, &mut g);
            let d_a = relu_backward(&a, &d_r);
            self.domain_fc1.backward(s, &emb, &d_a, &mut g);
            losses.push(loss);
            for (p, gp) in self.store.params.iter_mut().zip(&g.0) {
                if p.trainable && p.group == Group::Domain {
                    for (v, d) in p.value.iter_mut().zip(gp) {
                        *v -= lr * d;
                    }
                }
            }
        }
        losses
    }

    /// Folds the batch statistics of a training forward pass into the
    /// running averages.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let mut pairs: Vec<(BatchNorm, BnCache)> = Vec::new();
        if let Some(c) = &cache.stem_bn {
            pairs.push((self.stem_bn.clone(), c.clone()));
        }
        for (b, c) in self.blocks.iter().zip(&cache.blocks) {
            for (bn, bc) in b.bn_pairs(c) {
                pairs.push((bn.clone(), bc.clone()));
            }
        }
        for (bn, c) in &pairs {
            bn.update_running(&mut self.store, c);
        }
    }

    /// Plain SGD step on trainable parameters.
    pub fn sgd_step(&mut self, grads: &Grads, lr: f64) {
        self.sgd_step_scaled(grads, lr, 1.0);
    }

    /// SGD step with the domain head's rate multiplied by `domain_scale`.
    pub fn sgd_step_scaled(&mut self, grads: &Grads, lr: f64, domain_scale: f64) {
        for (p, g) in self.store.params.iter_mut().zip(&grads.0) {
            if p.trainable {
                let rate = if p.group == Group::Domain { lr * domain_scale } else { lr };
                for (v, d) in p.value.iter_mut().zip(g) {
                    *v -= rate * d;
                }
            }
        }
    }
}

pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}
