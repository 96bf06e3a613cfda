use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::MultichannelWaveform;
use crate::dsp::stft::Window;
use crate::error::{invalid, Error, Result};

/// Number of cepstral coefficients per frame.
pub const MFCC_DIM: usize = 30;

/// Frame-level cepstral features, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    rows: usize,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, rows: usize) -> Result<Self> {
        if data.len() != rows * MFCC_DIM {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {rows} rows of {MFCC_DIM}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return invalid("feature matrix contains non-finite values");
        }
        Ok(Self { data, rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * MFCC_DIM);
        for r in rows {
            if r.len() != MFCC_DIM {
                return Err(Error::ShapeMismatch(format!("row of length {}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(data, rows.len())
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_cols(&self) -> usize {
        MFCC_DIM
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * MFCC_DIM..(i + 1) * MFCC_DIM]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Serializes to the `FFSV` container: magic, u32 rows, u32 cols,
    /// row-major little-endian float32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.data.len());
        out.extend_from_slice(b"FFSV");
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(MFCC_DIM as u32).to_le_bytes());
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < 12 || &b[0..4] != b"FFSV" {
            return Err(Error::Malformed("missing FFSV magic".into()));
        }
        let rows = u32::from_le_bytes([b[4], b[5], b[6], b[7]]) as usize;
        let cols = u32::from_le_bytes([b[8], b[9], b[10], b[11]]) as usize;
        if cols != MFCC_DIM {
            return Err(Error::ShapeMismatch(format!("{cols} columns")));
        }
        let need = 12 + 4 * rows * cols;
        if b.len() < need {
            return Err(Error::Truncated(format!("{} of {need} bytes", b.len())));
        }
        let data = b[12..need]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        Self::new(data, rows)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub num_filters: usize,
    pub preemphasis: f64,
    pub low_freq: f64,
    /// Upper band edge sits this far below Nyquist.
    pub high_freq_margin: f64,
    pub log_floor: f64,
    pub window: Window,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            num_filters: MFCC_DIM,
            preemphasis: 0.97,
            low_freq: 20.0,
            high_freq_margin: 100.0,
            log_floor: 1e-10,
            window: Window::Hamming,
        }
    }
}

/// Frame length and hop in samples for a sample rate.
pub fn framing(frame_ms: f64, hop_ms: f64, sample_rate: u32) -> (usize, usize) {
    let fs = f64::from(sample_rate);
    (
        (frame_ms * fs / 1000.0).round() as usize,
        (hop_ms * fs / 1000.0).round() as usize,
    )
}

pub fn num_frames(len: usize, frame: usize, hop: usize) -> usize {
    if len < frame || frame == 0 {
        0
    } else {
        1 + (len - frame) / hop
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    1127.0 * (1.0 + f / 700.0).ln()
}

/// Triangular mel filters over the one-sided power spectrum, as
/// `num_filters` rows of `fft_size / 2 + 1` weights.
pub fn mel_filterbank(
    num_filters: usize,
    fft_size: usize,
    sample_rate: u32,
    low: f64,
    high: f64,
) -> Vec<Vec<f64>> {
    let ml = hz_to_mel(low);
    let mh = hz_to_mel(high);
    let step = (mh - ml) / (num_filters + 1) as f64;
    let bins = fft_size / 2 + 1;
    let bin_hz = f64::from(sample_rate) / fft_size as f64;
    (0..num_filters)
        .map(|m| {
            let left = ml + m as f64 * step;
            let centre = left + step;
            let right = centre + step;
            (0..bins)
                .map(|k| {
                    let mel = hz_to_mel(k as f64 * bin_hz);
                    if mel > left && mel <= centre {
                        (mel - left) / (centre - left)
                    } else if mel > centre && mel < right {
                        (right - mel) / (right - centre)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II.
pub fn dct2_orthonormal(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                .sum();
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            s * scale
        })
        .collect()
}

/// 30-dimensional MFCCs of a mono waveform.
pub fn mfcc(w: &MultichannelWaveform, cfg: &MfccConfig) -> Result<FeatureMatrix> {
    if w.num_channels() != 1 {
        return invalid(format!("mfcc needs mono input, got {} channels", w.num_channels()));
    }
    if w.sample_rate() < 8000 {
        return invalid("sample rate below 8 kHz");
    }
    if cfg.num_filters != MFCC_DIM {
        return invalid(format!("filter count must be {MFCC_DIM}"));
    }
    let (frame, hop) = framing(cfg.frame_ms, cfg.hop_ms, w.sample_rate());
    let frames = num_frames(w.len(), frame, hop);
    if frames == 0 {
        return Err(Error::TooShort(format!("{} samples, frame is {frame}", w.len())));
    }
    let fft_size = frame.next_power_of_two();
    let nyquist = f64::from(w.sample_rate()) / 2.0;
    let bank = mel_filterbank(
        cfg.num_filters,
        fft_size,
        w.sample_rate(),
        cfg.low_freq,
        nyquist - cfg.high_freq_margin,
    );
    let win = cfg.window.coefficients(frame);
    let fft = FftPlanner::new().plan_fft_forward(fft_size);
    let x = w.channel(0);
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    let mut data = Vec::with_capacity(frames * MFCC_DIM);
    let mut seg = vec![0.0; frame];
    for t in 0..frames {
        seg.copy_from_slice(&x[t * hop..t * hop + frame]);
        for i in (1..frame).rev() {
            seg[i] -= cfg.preemphasis * seg[i - 1];
        }
        seg[0] -= cfg.preemphasis * seg[0];
        buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for i in 0..frame {
            buf[i].re = seg[i] * win[i];
        }
        fft.process(&mut buf);
        let log_mel: Vec<f64> = bank
            .iter()
            .map(|filt| {
                let e: f64 = filt
                    .iter()
                    .zip(&buf)
                    .map(|(wt, z)| wt * z.norm_sqr())
                    .sum();
                e.max(cfg.log_floor).ln()
            })
            .collect();
        data.extend(dct2_orthonormal(&log_mel));
    }
    FeatureMatrix::new(data, frames)
}
