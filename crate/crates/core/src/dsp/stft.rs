use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::audio::MultichannelWaveform;
use crate::error::{invalid, Error, Result};

/// Analysis window shape. Both are the periodic variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Hamming,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let c = (2.0 * std::f64::consts::PI * i as f64 / n).cos();
                match self {
                    Window::Hann => 0.5 - 0.5 * c,
                    Window::Hamming => 0.54 - 0.46 * c,
                }
            })
            .collect()
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(Window::Hann),
            "hamming" => Ok(Window::Hamming),
            other => invalid(format!("unknown window '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop_length: usize,
    pub window: Window,
    pub fft_size: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_length: 512,
            hop_length: 128,
            window: Window::Hann,
            fft_size: 512,
        }
    }
}

impl StftConfig {
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Checks the structural constraints (not the overlap-add condition).
    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 || self.hop_length == 0 {
            return invalid("window and hop lengths must be positive");
        }
        if self.hop_length > self.window_length {
            return invalid("hop length exceeds window length");
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < self.window_length {
            return invalid("fft size must be a power of two no smaller than the window");
        }
        Ok(())
    }

    /// True when shifted copies of the window sum to a constant.
    pub fn is_cola(&self) -> bool {
        let w = self.window.coefficients(self.window_length);
        let sums: Vec<f64> = (0..self.hop_length)
            .map(|n| w.iter().skip(n).step_by(self.hop_length).sum())
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        max > 0.0 && (max - min) <= 1e-9 * max
    }

    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.window_length {
            0
        } else {
            1 + (len - self.window_length) / self.hop_length
        }
    }
}

/// Per-channel complex time-frequency grid, stored channel-major then bin
/// then frame so each bin's trajectory is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    data: Vec<Complex64>,
    channels: usize,
    bins: usize,
    frames: usize,
    config: StftConfig,
    sample_rate: u32,
    num_samples: usize,
}

impl ComplexSpectrogram {
    pub fn zeros(
        channels: usize,
        frames: usize,
        config: StftConfig,
        sample_rate: u32,
        num_samples: usize,
    ) -> Self {
        let bins = config.num_bins();
        Self {
            data: vec![Complex64::new(0.0, 0.0); channels * bins * frames],
            channels,
            bins,
            frames,
            config,
            sample_rate,
            num_samples,
        }
    }

    /// A spectrogram with the same metadata but a different channel count.
    pub fn zeros_like(&self, channels: usize) -> Self {
        Self::zeros(
            channels,
            self.frames,
            self.config,
            self.sample_rate,
            self.num_samples,
        )
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Length of the time signal this spectrogram describes.
    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    fn idx(&self, c: usize, f: usize, t: usize) -> usize {
        (c * self.bins + f) * self.frames + t
    }

    pub fn get(&self, c: usize, f: usize, t: usize) -> Complex64 {
        self.data[self.idx(c, f, t)]
    }

    pub fn set(&mut self, c: usize, f: usize, t: usize, v: Complex64) {
        let i = self.idx(c, f, t);
        self.data[i] = v;
    }

    /// Frame trajectory of one bin in one channel.
    pub fn bin(&self, c: usize, f: usize) -> &[Complex64] {
        let i = self.idx(c, f, 0);
        &self.data[i..i + self.frames]
    }

    pub fn bin_mut(&mut self, c: usize, f: usize) -> &mut [Complex64] {
        let i = self.idx(c, f, 0);
        let n = self.frames;
        &mut self.data[i..i + n]
    }

    /// All channels of one bin, as `channels` rows of `frames` values.
    pub fn bin_matrix(&self, f: usize) -> Vec<Vec<Complex64>> {
        (0..self.channels).map(|c| self.bin(c, f).to_vec()).collect()
    }

    pub fn set_bin_matrix(&mut self, f: usize, rows: &[Vec<Complex64>]) {
        for (c, row) in rows.iter().enumerate() {
            self.bin_mut(c, f).copy_from_slice(row);
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Mean squared magnitude over all entries.
    pub fn mean_power(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.data.len() as f64
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= alpha);
        out
    }

    /// Keeps a single channel.
    pub fn channel(&self, c: usize) -> Result<Self> {
        if c >= self.channels {
            return invalid(format!("channel {c} out of range"));
        }
        let mut out = self.zeros_like(1);
        let start = self.idx(c, 0, 0);
        out.data
            .copy_from_slice(&self.data[start..start + self.bins * self.frames]);
        Ok(out)
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    }
}

/// Short-time Fourier transform of every channel, no edge padding.
pub fn stft(w: &MultichannelWaveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if w.len() < cfg.window_length {
        return Err(Error::TooShort(format!(
            "{} samples, window is {}",
            w.len(),
            cfg.window_length
        )));
    }
    let frames = cfg.num_frames(w.len());
    let win = cfg.window.coefficients(cfg.window_length);
    let fft = plans(cfg.fft_size).forward;
    let mut out = ComplexSpectrogram::zeros(w.num_channels(), frames, *cfg, w.sample_rate(), w.len());
    let bins = out.bins;
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for c in 0..w.num_channels() {
        let x = w.channel(c);
        for t in 0..frames {
            let start = t * cfg.hop_length;
            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for (n, (&s, &wn)) in x[start..start + cfg.window_length].iter().zip(&win).enumerate() {
                buf[n] = Complex64::new(s * wn, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (f, &v) in buf.iter().take(bins).enumerate() {
                out.set(c, f, t, v);
            }
        }
    }
    Ok(out)
}

/// Weighted overlap-add synthesis. Samples with no window support are zero.
pub fn istft(s: &ComplexSpectrogram) -> Result<MultichannelWaveform> {
    let cfg = s.config;
    cfg.validate()?;
    if !cfg.is_cola() {
        return invalid("window/hop pair does not satisfy constant overlap-add");
    }
    let n = cfg.fft_size;
    let win = cfg.window.coefficients(cfg.window_length);
    let ifft = plans(n).inverse;
    let covered = if s.frames == 0 {
        0
    } else {
        (s.frames - 1) * cfg.hop_length + cfg.window_length
    };
    let out_len = s.num_samples.max(covered);
    let mut norm = vec![0.0; out_len];
    for t in 0..s.frames {
        for (k, &wk) in win.iter().enumerate() {
            norm[t * cfg.hop_length + k] += wk * wk;
        }
    }
    let peak = norm.iter().cloned().fold(0.0, f64::max);
    let mut channels = Vec::with_capacity(s.channels);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    for c in 0..s.channels {
        let mut y = vec![0.0; out_len];
        for t in 0..s.frames {
            for f in 0..s.bins {
                buf[f] = s.get(c, f, t);
            }
            // Hermitian completion
            for f in s.bins..n {
                buf[f] = buf[n - f].conj();
            }
            buf[0].im = 0.0;
            buf[n / 2].im = 0.0;
            ifft.process_with_scratch(&mut buf, &mut scratch);
            let start = t * cfg.hop_length;
            for (k, &wk) in win.iter().enumerate() {
                y[start + k] += buf[k].re / n as f64 * wk;
            }
        }
        for (v, &d) in y.iter_mut().zip(&norm) {
            if d > 1e-10 * peak {
                *v /= d;
            } else {
                *v = 0.0;
            }
        }
        y.truncate(s.num_samples);
        channels.push(y);
    }
    MultichannelWaveform::new(channels, s.sample_rate)
}

/// Sample range where every sample is covered by full window overlap.
pub fn interior_range(cfg: &StftConfig, num_samples: usize) -> std::ops::Range<usize> {
    let frames = cfg.num_frames(num_samples);
    if frames == 0 {
        return 0..0;
    }
    let covered = (frames - 1) * cfg.hop_length + cfg.window_length;
    let lo = cfg.window_length;
    let hi = covered.saturating_sub(cfg.window_length);
    if hi <= lo {
        0..0
    } else {
        lo..hi
    }
}
