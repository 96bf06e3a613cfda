use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::Mode;
use super::net::{LossReport, MicroNet};
use super::tensor::Tensor4;
use crate::audio::MultichannelWaveform;
use crate::dsp::vad::frame_log_energies;
use crate::dsp::{apply_vad, energy_vad, mfcc, FeatureMatrix, MfccConfig, VadConfig, MFCC_DIM};
use crate::error::{invalid, Error, Result};
use crate::eval::Embedding;

/// A variable-length feature sequence with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    /// Row-major `frames × bins`.
    pub data: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub speaker: usize,
    pub domain: Option<usize>,
}

impl TrainExample {
    pub fn from_features(f: &FeatureMatrix, speaker: usize, domain: Option<usize>) -> Self {
        Self {
            data: f.as_slice().to_vec(),
            frames: f.num_rows(),
            bins: MFCC_DIM,
            speaker,
            domain,
        }
    }
}

/// `len` frames starting at `start`, repeating the sequence when it is
/// shorter than the crop.
pub fn crop(data: &[f64], frames: usize, bins: usize, start: usize, len: usize) -> Vec<f64> {
    assert!(frames > 0, "empty sequence");
    let mut out = Vec::with_capacity(len * bins);
    for i in 0..len {
        let t = (start + i) % frames;
        out.extend_from_slice(&data[t * bins..(t + 1) * bins]);
    }
    out
}

pub fn center_start(frames: usize, len: usize) -> usize {
    frames.saturating_sub(len) / 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Gradient reversal scale during the adversarial stage.
    pub lambda: f64,
    /// Learning-rate multiplier of the domain classifier, letting it track
    /// the extractor during adversarial training.
    pub domain_lr_scale: f64,
    /// Additional domain-head-only updates after every adversarial step.
    pub domain_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 0.1,
            decay: 0.1,
            decay_every: 5,
            epochs: 10,
            seed: 0,
            lambda: 1.0,
            domain_lr_scale: 1.0,
            domain_steps: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return invalid("batch size must be at least 2");
        }
        if !(self.learning_rate > 0.0) || !(self.decay > 0.0) || self.decay_every == 0 || self.epochs == 0 {
            return invalid("learning rate, decay, decay period and epochs must be positive");
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return invalid("lambda must be finite and nonnegative");
        }
        if !(self.domain_lr_scale > 0.0) || !self.domain_lr_scale.is_finite() {
            return invalid("domain learning-rate scale must be positive");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay.powi((epoch / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Speaker classification only; gradient reversal scale is zero.
    SpeakerOnly,
    /// Speaker classification with the adversarial domain branch.
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub steps: Vec<LossReport>,
    /// Mean total loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Builds a `(batch, 1, frames, bins)` input from equal-sized crops.
pub fn batch_tensor(crops: &[Vec<f64>], frames: usize, bins: usize) -> Result<Tensor4> {
    Tensor4::from_vec(crops.len(), 1, frames, bins, crops.concat())
}

/// SGD with a step-decayed learning rate, random crops and a seeded shuffle.
pub fn train(net: &mut MicroNet, data: &[TrainExample], cfg: &TrainConfig, stage: Stage) -> Result<TrainHistory> {
    cfg.validate()?;
    let frames = net.config.input_frames;
    let bins = net.config.input_bins;
    if data.iter().any(|e| e.bins != bins || e.frames == 0 || e.data.len() != e.frames * e.bins) {
        return Err(Error::ShapeMismatch(format!("every example needs {bins} bins and at least one frame")));
    }
    let mut speakers: Vec<usize> = data.iter().map(|e| e.speaker).collect();
    speakers.sort_unstable();
    speakers.dedup();
    if speakers.len() < 2 {
        return invalid("training needs at least two speakers");
    }
    if speakers.iter().any(|&s| s >= net.config.num_speakers) {
        return invalid("speaker label exceeds the classifier size");
    }
    let have_domains = data.iter().all(|e| e.domain.is_some());
    if stage == Stage::Adversarial {
        if !have_domains {
            return invalid("adversarial stage needs a domain label on every example");
        }
        let first = data[0].domain;
        if data.iter().all(|e| e.domain == first) {
            return invalid("adversarial stage needs at least two domains");
        }
    }
    let lambda = match stage {
        Stage::SpeakerOnly => 0.0,
        Stage::Adversarial => cfg.lambda,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let crops: Vec<Vec<f64>> = chunk
                .iter()
                .map(|&i| {
                    let e = &data[i];
                    let start = if e.frames > frames { rng.random_range(0..=e.frames - frames) } else { 0 };
                    crop(&e.data, e.frames, bins, start, frames)
                })
                .collect();
            let x = batch_tensor(&crops, frames, bins)?;
            let spk: Vec<usize> = chunk.iter().map(|&i| data[i].speaker).collect();
            let dom: Option<Vec<usize>> = have_domains.then(|| chunk.iter().map(|&i| data[i].domain.unwrap()).collect());
            let (report, grads, cache) = net.loss_and_grads(&x, &spk, dom.as_deref(), lambda)?;
            net.sgd_step_scaled(&grads, lr, cfg.domain_lr_scale);
            if let (Stage::Adversarial, Some(d)) = (stage, dom.as_deref()) {
                net.domain_head_steps(&cache, d, lr * cfg.domain_lr_scale, cfg.domain_steps);
            }
            net.update_running_stats(&cache);
            sum += report.total;
            count += 1;
            history.steps.push(report);
        }
        history.epoch_losses.push(if count > 0 { sum / count as f64 } else { f64::NAN });
        log::debug!("epoch {epoch}: lr {lr} loss {}", history.epoch_losses[epoch]);
    }
    Ok(history)
}

/// Feature front end shared by training and embedding extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Frontend {
    pub mfcc: MfccConfig,
    pub vad: VadConfig,
    /// Subtract the per-utterance mean of each coefficient.
    pub mean_normalize: bool,
}

impl Default for Frontend {
    fn default() -> Self {
        Self {
            mfcc: MfccConfig::default(),
            vad: VadConfig::default(),
            mean_normalize: true,
        }
    }
}

/// MFCCs of the speech frames of a mono waveform.
pub fn prepare_features(w: &MultichannelWaveform, fe: &Frontend) -> Result<FeatureMatrix> {
    let feats = mfcc(w, &fe.mfcc)?;
    // digital silence passes the relative VAD threshold; nothing above the
    // energy floor means there is no speech to embed
    let floor = fe.vad.energy_floor.ln();
    if frame_log_energies(w, &fe.vad)?.iter().all(|&e| e <= floor) {
        return Err(Error::NoSpeech);
    }
    let mask = energy_vad(w, &fe.vad)?;
    let speech = apply_vad(&feats, &mask)?;
    if !fe.mean_normalize {
        return Ok(speech);
    }
    let rows = speech.num_rows();
    let mut mean = [0.0; MFCC_DIM];
    for r in 0..rows {
        for (m, v) in mean.iter_mut().zip(speech.row(r)) {
            *m += v / rows as f64;
        }
    }
    let data = (0..rows)
        .flat_map(|r| speech.row(r).iter().zip(&mean).map(|(v, m)| v - m).collect::<Vec<_>>())
        .collect();
    FeatureMatrix::new(data, rows)
}

/// Embedding of a feature sequence from its centre crop.
pub fn embed_sequence(net: &MicroNet, data: &[f64], frames: usize, bins: usize) -> Result<Embedding> {
    if bins != net.config.input_bins {
        return Err(Error::ShapeMismatch(format!("{bins} bins, network expects {}", net.config.input_bins)));
    }
    if frames == 0 {
        return Err(Error::NoSpeech);
    }
    let len = net.config.input_frames;
    let c = crop(data, frames, bins, center_start(frames, len), len);
    let x = Tensor4::from_vec(1, 1, len, bins, c)?;
    let (out, _) = net.forward(&x, Mode::Eval)?;
    Embedding::new(out.embeddings.data)
}

/// MFCC, energy VAD, centre crop with repeat padding, then the network.
pub fn extract_embedding(w: &MultichannelWaveform, net: &MicroNet, fe: &Frontend) -> Result<Embedding> {
    let feats = prepare_features(w, fe)?;
    embed_sequence(net, feats.as_slice(), feats.num_rows(), MFCC_DIM)
}
