//! Seeded two-class, two-domain Gaussian feature maps and a logistic
//! regression probe for frozen embeddings.

#![allow(dead_code)]

use ffsv_core::eval::{cosine_score, eer, Embedding};
use ffsv_core::nn::{train, MicroNet, MicroNetConfig, BlockConfig, Stage, Tensor4, TrainConfig, TrainExample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct ToySpec {
    pub frames: usize,
    pub bins: usize,
    pub per_cell: usize,
    /// Scale of the class patterns.
    pub class_gap: f64,
    /// Scale of the domain offset pattern.
    pub domain_gap: f64,
    pub noise: f64,
    /// Seeds the class and domain patterns.
    pub seed: u64,
    /// Seeds the per-example noise, so draws with equal `seed` share a
    /// distribution.
    pub noise_seed: u64,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Examples with `speaker` = class and `domain` set; ordered cell by cell.
pub fn toy_set(spec: &ToySpec) -> Vec<TrainExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // class patterns live in the lower bins, the domain offset in the upper
    let low = spec.bins / 2;
    let class: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..spec.bins).map(|f| if f < low { spec.class_gap * gauss(&mut rng) } else { 0.0 }).collect())
        .collect();
    let shift: Vec<f64> = (0..spec.bins).map(|f| if f >= low { spec.domain_gap * gauss(&mut rng) } else { 0.0 }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
    let mut out = Vec::new();
    for i in 0..spec.per_cell {
        for y in 0..2 {
            for d in 0..2 {
                let _ = i;
                let sign = if d == 0 { -0.5 } else { 0.5 };
                let data = (0..spec.frames * spec.bins)
                    .map(|k| {
                        let f = k % spec.bins;
                        class[y][f] + sign * shift[f] + spec.noise * gauss(&mut rng)
                    })
                    .collect();
                out.push(TrainExample { data, frames: spec.frames, bins: spec.bins, speaker: y, domain: Some(d) });
            }
        }
    }
    out
}

/// Held-out accuracy of an L2-regularized logistic regression trained by
/// full-batch gradient descent on standardized features. The first half of
/// the rows trains, the second half tests.
pub fn probe_accuracy(x: &[Vec<f64>], y: &[usize]) -> f64 {
    let n = x.len();
    let dim = x[0].len();
    let half = n / 2;
    let mut mean = vec![0.0; dim];
    let mut std = vec![0.0; dim];
    for r in &x[..half] {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / half as f64;
        }
    }
    for r in &x[..half] {
        for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
            *s += (v - m).powi(2) / half as f64;
        }
    }
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&mean).zip(&std).map(|((v, m), s)| (v - m) / s.sqrt().max(1e-12)).collect())
        .collect();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    for _ in 0..2000 {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (r, &t) in z[..half].iter().zip(&y[..half]) {
            let a: f64 = b + r.iter().zip(&w).map(|(p, q)| p * q).sum::<f64>();
            let e = 1.0 / (1.0 + (-a).exp()) - t as f64;
            for (g, v) in gw.iter_mut().zip(r) {
                *g += e * v / half as f64;
            }
            gb += e / half as f64;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= 0.5 * (g + 1e-3 * *wi);
        }
        b -= 0.5 * gb;
    }
    let correct = z[half..]
        .iter()
        .zip(&y[half..])
        .filter(|(r, &t)| {
            let a: f64 = b + r.iter().zip(&w).map(|(p, q)| p * q).sum::<f64>();
            (a > 0.0) == (t == 1)
        })
        .count();
    correct as f64 / (n - half) as f64
}

fn embed_all(net: &MicroNet, set: &[TrainExample]) -> Vec<Vec<f64>> {
    set.iter()
        .map(|e| {
            let x = Tensor4::from_vec(1, 1, e.frames, e.bins, e.data.clone()).unwrap();
            net.embed_batch(&x).unwrap().data
        })
        .collect()
}

/// Probe accuracies on held-out embeddings after speaker-only and
/// adversarial fine-tuning of the same stage-one network.
#[derive(Debug, Clone, PartialEq)]
pub struct DatToyOutcome {
    pub plain_domain: f64,
    pub plain_class: f64,
    pub dat_domain: f64,
    pub dat_class: f64,
    /// EER of cosine trials enrolled in one domain and tested in the other.
    pub plain_eer: f64,
    pub dat_eer: f64,
}

/// Trials between the first 50 held-out examples of domain 0 (enrollment)
/// and of domain 1 (test); targets share the class.
pub fn cross_domain_eer(emb: &[Vec<f64>], set: &[TrainExample]) -> f64 {
    let pick = |d: usize| -> Vec<usize> { (0..set.len()).filter(|&i| set[i].domain == Some(d)).take(50).collect() };
    let (enroll, test) = (pick(0), pick(1));
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for &i in &enroll {
        let a = Embedding::new(emb[i].clone()).unwrap();
        for &j in &test {
            scores.push(cosine_score(&a, &Embedding::new(emb[j].clone()).unwrap()).unwrap());
            labels.push(set[i].speaker == set[j].speaker);
        }
    }
    eer(&scores, &labels).unwrap().0
}

pub fn dat_toy() -> DatToyOutcome {
    let spec = |noise_seed| ToySpec {
        frames: 16,
        bins: 12,
        per_cell: 100,
        class_gap: 0.5,
        domain_gap: 1.0,
        noise: 1.0,
        seed: 1,
        noise_seed,
    };
    let train_set = toy_set(&spec(1));
    let test_set = toy_set(&spec(2));
    let cfg = MicroNetConfig {
        input_frames: 16,
        input_bins: 12,
        stem_channels: 4,
        blocks: vec![
            BlockConfig { mid: 4, out: 8, stride: 1, bam: true },
            BlockConfig { mid: 4, out: 8, stride: 2, bam: true },
        ],
        bam_reduction: 4,
        embedding_dim: 16,
        num_speakers: 2,
        domain_hidden: 16,
        seed: 3,
    };
    let stage1 = TrainConfig {
        batch_size: 32,
        learning_rate: 0.05,
        decay: 0.5,
        decay_every: 10,
        epochs: 20,
        seed: 5,
        lambda: 1.0,
        domain_lr_scale: 4.0,
        domain_steps: 20,
    };
    let mut base = MicroNet::new(cfg).unwrap();
    train(&mut base, &train_set, &stage1, Stage::SpeakerOnly).unwrap();
    let stage2 = TrainConfig { epochs: 60, seed: 6, ..stage1 };
    let mut dat = base.clone();
    train(&mut dat, &train_set, &stage2, Stage::Adversarial).unwrap();
    let mut plain = base;
    train(&mut plain, &train_set, &stage2, Stage::SpeakerOnly).unwrap();
    let domains: Vec<usize> = test_set.iter().map(|e| e.domain.unwrap()).collect();
    let classes: Vec<usize> = test_set.iter().map(|e| e.speaker).collect();
    let p = embed_all(&plain, &test_set);
    let d = embed_all(&dat, &test_set);
    DatToyOutcome {
        plain_domain: probe_accuracy(&p, &domains),
        plain_class: probe_accuracy(&p, &classes),
        dat_domain: probe_accuracy(&d, &domains),
        dat_class: probe_accuracy(&d, &classes),
        plain_eer: cross_domain_eer(&p, &test_set),
        dat_eer: cross_domain_eer(&d, &test_set),
    }
}

/// Two-block network small enough for a finite-difference sweep over
/// most of its parameters.
pub fn gradcheck_net() -> MicroNetConfig {
    MicroNetConfig {
        input_frames: 8,
        input_bins: 6,
        stem_channels: 3,
        blocks: vec![
            BlockConfig { mid: 3, out: 4, stride: 1, bam: true },
            BlockConfig { mid: 3, out: 6, stride: 2, bam: true },
        ],
        bam_reduction: 2,
        embedding_dim: 6,
        num_speakers: 3,
        domain_hidden: 5,
        seed: 17,
    }
}
