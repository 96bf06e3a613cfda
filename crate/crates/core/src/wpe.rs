//! Weighted prediction error dereverberation.
//!
//! Each frequency bin is processed independently. The late reverberation in
//! frame `t` is predicted from the stacked observations of all channels in
//! frames `t - delay ..= t - delay - taps + 1` with a filter fitted by
//! variance-weighted least squares, then subtracted. The per-frame variance
//! and the filter are re-estimated alternately.

use num_complex::Complex64;

use crate::dsp::ComplexSpectrogram;
use crate::error::{invalid, Error, Result};
use crate::linalg::{zero, CMatrix};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct WpeConfig {
    pub taps: usize,
    pub delay: usize,
    pub iterations: usize,
    /// Relative to the mean power of the input spectrogram.
    pub variance_floor: f64,
}

impl Default for WpeConfig {
    fn default() -> Self {
        Self {
            taps: 10,
            delay: 3,
            iterations: 3,
            variance_floor: 1e-8,
        }
    }
}

impl WpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 || self.delay == 0 || self.iterations == 0 {
            return invalid("taps, delay and iterations must be at least 1");
        }
        if !(self.variance_floor > 0.0) || !self.variance_floor.is_finite() {
            return invalid("variance floor must be positive");
        }
        Ok(())
    }
}

/// Full result of a WPE run.
#[derive(Debug, Clone)]
pub struct WpeOutput {
    pub dereverberated: ComplexSpectrogram,
    /// Per bin: the weighted prediction-error objective, including the
    /// filter ridge penalty, before the first update and after each
    /// iteration.
    pub objectives: Vec<Vec<f64>>,
    /// Per bin: Frobenius norm of the final prediction filter.
    pub filter_norms: Vec<f64>,
}

/// Dereverberates a multichannel spectrogram; output has the input's shape.
pub fn wpe(s: &ComplexSpectrogram, cfg: &WpeConfig) -> Result<ComplexSpectrogram> {
    Ok(wpe_detailed(s, cfg)?.dereverberated)
}

pub fn wpe_detailed(s: &ComplexSpectrogram, cfg: &WpeConfig) -> Result<WpeOutput> {
    cfg.validate()?;
    if s.num_channels() == 0 {
        return invalid("spectrogram has no channels");
    }
    if s.num_frames() <= cfg.delay + cfg.taps {
        return Err(Error::TooShort(format!(
            "{} frames, need more than delay + taps = {}",
            s.num_frames(),
            cfg.delay + cfg.taps
        )));
    }
    let mean_power = s.mean_power();
    let bins = s.num_bins();
    if mean_power == 0.0 {
        return Ok(WpeOutput {
            dereverberated: s.clone(),
            objectives: vec![vec![0.0]; bins],
            filter_norms: vec![0.0; bins],
        });
    }
    let floor = cfg.variance_floor * mean_power;
    let results = par::map_range(bins, |f| wpe_bin(&s.bin_matrix(f), cfg, floor));
    let mut out = s.clone();
    let mut objectives = Vec::with_capacity(bins);
    let mut filter_norms = Vec::with_capacity(bins);
    for (f, r) in results.into_iter().enumerate() {
        let r = r?;
        out.set_bin_matrix(f, &r.output);
        objectives.push(r.objectives);
        filter_norms.push(r.filter_norm);
    }
    Ok(WpeOutput {
        dereverberated: out,
        objectives,
        filter_norms,
    })
}

struct BinResult {
    output: Vec<Vec<Complex64>>,
    objectives: Vec<f64>,
    filter_norm: f64,
}

/// Delayed observation stack for frame `t`, laid out tap-major.
fn stacked(x: &[Vec<Complex64>], t: usize, delay: usize, taps: usize, out: &mut [Complex64]) {
    let ch = x.len();
    for k in 0..taps {
        let lag = delay + k;
        for c in 0..ch {
            out[k * ch + c] = if t >= lag { x[c][t - lag] } else { zero() };
        }
    }
}

fn variances(y: &[Vec<Complex64>], floor: f64) -> Vec<f64> {
    let ch = y.len() as f64;
    let frames = y[0].len();
    (0..frames)
        .map(|t| (y.iter().map(|row| row[t].norm_sqr()).sum::<f64>() / ch).max(floor))
        .collect()
}

fn objective(y: &[Vec<Complex64>], lambda: &[f64]) -> f64 {
    let ch = y.len() as f64;
    lambda
        .iter()
        .enumerate()
        .map(|(t, &l)| y.iter().map(|row| row[t].norm_sqr()).sum::<f64>() / l + ch * l.ln())
        .sum()
}

/// Weighted, ridge-penalized least-squares filter. Solved by QR on the
/// weighted design matrix with the ridge appended as extra rows: once some
/// frame variances reach the floor their weights dwarf the rest and the
/// normal equations lose too much precision.
fn solve_filter(
    x: &[Vec<Complex64>],
    lambda: &[f64],
    cfg: &WpeConfig,
    ridge: f64,
    stack: &mut [Complex64],
) -> Result<CMatrix> {
    let ch = x.len();
    let frames = x[0].len();
    let dim = stack.len();
    let rows = frames + dim;
    let mut a = CMatrix::zeros(rows, dim);
    let mut b = CMatrix::zeros(rows, ch);
    for t in 0..frames {
        stacked(x, t, cfg.delay, cfg.taps, stack);
        let w = 1.0 / lambda[t].sqrt();
        for i in 0..dim {
            a[(t, i)] = stack[i] * w;
        }
        for c in 0..ch {
            b[(t, c)] = x[c][t] * w;
        }
    }
    for i in 0..dim {
        a[(frames + i, i)] = Complex64::new(ridge.sqrt(), 0.0);
    }
    let (q, r) = a.qr().unpack();
    let g = r
        .solve_upper_triangular(&(q.adjoint() * b))
        .ok_or_else(|| Error::Numerical("singular WPE system".into()))?;
    // the design rows are unconjugated stacks, the filter acts as G^H s
    Ok(g.map(|v| v.conj()))
}

fn wpe_bin(x: &[Vec<Complex64>], cfg: &WpeConfig, floor: f64) -> Result<BinResult> {
    let ch = x.len();
    let frames = x[0].len();
    let dim = ch * cfg.taps;
    let mut y: Vec<Vec<Complex64>> = x.to_vec();
    let mut objectives = Vec::with_capacity(cfg.iterations + 1);
    let mut filter = CMatrix::zeros(dim, ch);
    let mut stack = vec![zero(); dim];
    // Fixed for the whole run so that the penalized objective is a single
    // function decreased by every step.
    let mut ridge = 0.0;
    for it in 0..cfg.iterations {
        let lambda = variances(&y, floor);
        if it == 0 {
            let mut tr = 0.0;
            for (t, l) in lambda.iter().enumerate() {
                stacked(x, t, cfg.delay, cfg.taps, &mut stack);
                tr += stack.iter().map(|v| v.norm_sqr()).sum::<f64>() / l;
            }
            let start = objective(&y, &lambda);
            if tr == 0.0 {
                // nothing to predict from: the output is the input
                objectives.resize(cfg.iterations + 1, start);
                break;
            }
            ridge = 1e-10 * tr;
            objectives.push(start);
        }
        filter = solve_filter(x, &lambda, cfg, ridge, &mut stack)?;
        for t in 0..frames {
            stacked(x, t, cfg.delay, cfg.taps, &mut stack);
            for c in 0..ch {
                let mut pred = zero();
                for (i, s) in stack.iter().enumerate() {
                    pred += filter[(i, c)].conj() * s;
                }
                y[c][t] = x[c][t] - pred;
            }
        }
        objectives.push(objective(&y, &lambda) + ridge * filter.norm_squared());
    }
    if objectives.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite WPE objective".into()));
    }
    Ok(BinResult {
        output: y,
        objectives,
        filter_norm: filter.norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{StftConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spec(ch: usize, frames: usize, seed: u64) -> ComplexSpectrogram {
        let cfg = StftConfig { window_length: 64, hop_length: 16, fft_size: 64, ..Default::default() };
        let mut s = ComplexSpectrogram::zeros(ch, frames, cfg, 16000, 64 + 16 * (frames - 1));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in s.values_mut() {
            *v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        s
    }

    #[test]
    fn zero_in_zero_out() {
        let cfg = StftConfig::default();
        let s = ComplexSpectrogram::zeros(2, 40, cfg, 16000, 512 + 39 * 128);
        let out = wpe(&s, &WpeConfig::default()).unwrap();
        assert!(out.values().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn too_few_frames() {
        let s = random_spec(2, 13, 0);
        assert!(matches!(wpe(&s, &WpeConfig::default()), Err(Error::TooShort(_))));
    }

    #[test]
    fn shape_preserved_and_objective_non_increasing() {
        let s = random_spec(3, 60, 1);
        let out = wpe_detailed(&s, &WpeConfig::default()).unwrap();
        let d = &out.dereverberated;
        assert_eq!(
            (d.num_channels(), d.num_bins(), d.num_frames()),
            (s.num_channels(), s.num_bins(), s.num_frames())
        );
        for obj in &out.objectives {
            assert_eq!(obj.len(), 4);
            for w in obj.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].abs());
            }
        }
    }

    #[test]
    fn scale_equivariant() {
        let s = random_spec(2, 50, 2);
        let a = wpe(&s, &WpeConfig::default()).unwrap();
        let b = wpe(&s.scaled(37.5), &WpeConfig::default()).unwrap();
        let num: f64 = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x * 37.5 - y).norm_sqr())
            .sum();
        let den: f64 = b.values().iter().map(|y| y.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn removes_a_planted_autoregressive_tail() {
        // y_t = e_t + 0.8 y_{t-3} with a strongly nonstationary innovation:
        // the residual energy falls back to the innovation energy.
        let mut innovation = random_spec(1, 400, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gains: Vec<f64> = (0..400).map(|_| 10f64.powf(rng.random_range(-2.0..1.0))).collect();
        for f in 0..innovation.num_bins() {
            for (v, g) in innovation.bin_mut(0, f).iter_mut().zip(&gains) {
                *v *= *g;
            }
        }
        let mut s = innovation.clone();
        for f in 0..s.num_bins() {
            let row = s.bin_mut(0, f);
            for t in 3..row.len() {
                let prev = row[t - 3];
                row[t] += prev * 0.8;
            }
        }
        let out = wpe_detailed(&s, &WpeConfig { taps: 2, ..Default::default() }).unwrap();
        for f in 0..s.num_bins() {
            let e = innovation.bin(0, f);
            let y = out.dereverberated.bin(0, f);
            let pe: f64 = e.iter().map(|v| v.norm_sqr()).sum();
            let py: f64 = y.iter().map(|v| v.norm_sqr()).sum();
            let px: f64 = s.bin(0, f).iter().map(|v| v.norm_sqr()).sum();
            assert!(px / pe > 2.0);
            assert!(py / pe < 1.1, "bin {f}: {}", py / pe);
            assert!((out.filter_norms[f] - 0.8).abs() < 0.2);
        }
    }
}
