use crate::audio::MultichannelWaveform;
use crate::dsp::mfcc::{framing, num_frames, FeatureMatrix};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VadConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Threshold offset relative to the utterance mean log-energy.
    pub offset: f64,
    pub energy_floor: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            offset: -1.0,
            energy_floor: 1e-10,
        }
    }
}

/// Per-frame speech decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VadMask(pub Vec<bool>);

impl VadMask {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_speech(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

/// Frame log-energies on the MFCC framing grid.
pub fn frame_log_energies(w: &MultichannelWaveform, cfg: &VadConfig) -> Result<Vec<f64>> {
    if w.num_channels() != 1 {
        return invalid("energy VAD needs mono input");
    }
    if w.is_empty() {
        return invalid("empty input");
    }
    let (frame, hop) = framing(cfg.frame_ms, cfg.hop_ms, w.sample_rate());
    let n = num_frames(w.len(), frame, hop);
    if n == 0 {
        return Err(Error::TooShort(format!("{} samples, frame is {frame}", w.len())));
    }
    let x = w.channel(0);
    Ok((0..n)
        .map(|t| {
            let e: f64 = x[t * hop..t * hop + frame].iter().map(|v| v * v).sum();
            e.max(cfg.energy_floor).ln()
        })
        .collect())
}

/// Marks frames whose log-energy reaches the mean plus offset.
pub fn energy_vad(w: &MultichannelWaveform, cfg: &VadConfig) -> Result<VadMask> {
    let e = frame_log_energies(w, cfg)?;
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    let threshold = mean + cfg.offset;
    Ok(VadMask(e.iter().map(|&v| v >= threshold).collect()))
}

/// Drops non-speech rows, keeping order.
pub fn apply_vad(f: &FeatureMatrix, m: &VadMask) -> Result<FeatureMatrix> {
    if f.num_rows() != m.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows vs {} mask entries",
            f.num_rows(),
            m.len()
        )));
    }
    let rows: Vec<Vec<f64>> = (0..f.num_rows())
        .filter(|&i| m.0[i])
        .map(|i| f.row(i).to_vec())
        .collect();
    if rows.is_empty() {
        return Err(Error::NoSpeech);
    }
    FeatureMatrix::from_rows(&rows)
}
