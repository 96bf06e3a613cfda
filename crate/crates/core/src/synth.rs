//! Synthetic signals and acoustic scenes with known ground truth.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::MultichannelWaveform;
use crate::error::{invalid, Result};
use crate::roomsim::{convolve_rir, image_arrivals, simulate_rir, Point, RoomConfig};

/// Formant frequencies (Hz) of a few reference vowels.
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [440.0, 1020.0, 2240.0],
];
const BANDWIDTHS: [f64; 3] = [90.0, 110.0, 150.0];

/// Parameters of a source-filter voice.
#[derive(Debug, Clone, PartialEq)]
pub struct Voice {
    /// Mean fundamental frequency in Hz.
    pub f0: f64,
    /// Multiplier on every formant frequency (shorter tract, larger value).
    pub tract: f64,
    /// Spectral roll-off exponent of the harmonic amplitudes.
    pub tilt: f64,
    /// Level of aspiration noise relative to the harmonics.
    pub breath: f64,
}

impl Voice {
    /// A voice drawn from broad adult ranges.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        Self {
            f0: rng.random_range(90.0..240.0),
            tract: rng.random_range(0.85..1.2),
            tilt: rng.random_range(0.6..1.4),
            breath: rng.random_range(0.01..0.06),
        }
    }
}

fn formant_gain(freq: f64, formants: &[f64; 3]) -> f64 {
    formants
        .iter()
        .zip(BANDWIDTHS)
        .map(|(&fc, bw)| 1.0 / (1.0 + ((freq - fc) / bw).powi(2)))
        .sum()
}

/// Speech-like signal: voiced syllables on random vowels separated by short
/// pauses, peak-normalized to 0.5.
pub fn utterance(voice: &Voice, duration_secs: f64, sample_rate: u32, seed: u64) -> Result<Vec<f64>> {
    if !(duration_secs > 0.0) || sample_rate == 0 {
        return invalid("duration and sample rate must be positive");
    }
    let fs = f64::from(sample_rate);
    let n = (duration_secs * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; n];
    let nyquist = 0.45 * fs;
    let mut pos = (rng.random_range(0.02..0.08) * fs) as usize;
    let mut phase = 0.0;
    let mut jitter = 0.0;
    while pos < n {
        let len = (rng.random_range(0.12..0.3) * fs) as usize;
        let from = VOWELS[rng.random_range(0..VOWELS.len())];
        let to = VOWELS[rng.random_range(0..VOWELS.len())];
        let glide = rng.random_range(-0.15..0.15);
        let base = voice.f0 * rng.random_range(0.92..1.08);
        let end = (pos + len).min(n);
        for i in pos..end {
            let u = (i - pos) as f64 / len as f64;
            let env = (PI * u).sin().powf(0.6);
            let formants: [f64; 3] = std::array::from_fn(|j| voice.tract * (from[j] + (to[j] - from[j]) * u));
            let step: f64 = StandardNormal.sample(&mut rng);
            jitter = 0.995 * jitter + 0.002 * step;
            let f0 = base * (1.0 + glide * (u - 0.5) + jitter);
            phase += 2.0 * PI * f0 / fs;
            let mut s = 0.0;
            let mut k = 1;
            while k as f64 * f0 < nyquist {
                let fk = k as f64 * f0;
                let amp = formant_gain(fk, &formants) / (k as f64).powf(voice.tilt);
                s += amp * (k as f64 * phase).sin();
                k += 1;
            }
            let noise: f64 = StandardNormal.sample(&mut rng);
            out[i] = env * (s + voice.breath * noise);
        }
        pos = end + (rng.random_range(0.03..0.12) * fs) as usize;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    Ok(out)
}

/// Independent white Gaussian noise on every channel.
pub fn white_noise(channels: usize, len: usize, std: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..channels)
        .map(|_| (0..len).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); std * z }).collect())
        .collect()
}

/// Ratio in dB between the best-scaled projection of `estimate` onto
/// `reference` and the residual.
pub fn projection_ratio_db(estimate: &[f64], reference: &[f64]) -> f64 {
    let rr: f64 = reference.iter().map(|v| v * v).sum();
    let er: f64 = estimate.iter().zip(reference).map(|(a, b)| a * b).sum();
    let alpha = if rr > 0.0 { er / rr } else { 0.0 };
    let target: f64 = reference.iter().map(|v| (alpha * v).powi(2)).sum();
    let residual: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - alpha * b).powi(2))
        .sum();
    10.0 * (target / residual).log10()
}

pub fn power_ratio_db(signal: &[f64], noise: &[f64]) -> f64 {
    let ps: f64 = signal.iter().map(|v| v * v).sum();
    let pn: f64 = noise.iter().map(|v| v * v).sum();
    10.0 * (ps / pn).log10()
}

/// A mono source rendered in a room, with the direct-path part of every
/// microphone signal kept separately.
#[derive(Debug, Clone)]
pub struct ReverbScene {
    pub observed: MultichannelWaveform,
    /// Contribution of the first `direct_ms` of each response.
    pub direct: MultichannelWaveform,
}

pub fn reverberant_scene(source: &[f64], room: &RoomConfig, direct_ms: f64) -> Result<ReverbScene> {
    let rir = simulate_rir(room)?;
    let first: Vec<f64> = (0..room.mics.len())
        .map(|m| {
            Ok(image_arrivals(room, m)?
                .iter()
                .map(|a| a.delay_samples)
                .fold(f64::INFINITY, f64::min))
        })
        .collect::<Result<_>>()?;
    let split = (direct_ms * 1e-3 * f64::from(room.sample_rate)).round() as usize;
    let (direct_rir, _) = rir.split_direct(&first, split);
    let src = MultichannelWaveform::mono(source.to_vec(), room.sample_rate)?;
    Ok(ReverbScene {
        observed: convolve_rir(&src, &rir)?,
        direct: convolve_rir(&src, &direct_rir)?,
    })
}

/// Microphones on a horizontal circle around `centre`.
pub fn circular_array(centre: Point, radius: f64, count: usize) -> Vec<Point> {
    (0..count)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / count as f64;
            [centre[0] + radius * a.cos(), centre[1] + radius * a.sin(), centre[2]]
        })
        .collect()
}

/// Shoebox room with a circular array in the middle and the source at
/// `distance` metres along the first axis.
pub fn scene_room(dimensions: Point, reflection: f64, distance: f64, radius: f64, mics: usize, sample_rate: u32) -> RoomConfig {
    let centre = [dimensions[0] * 0.35, dimensions[1] * 0.5, 1.2];
    RoomConfig {
        dimensions,
        reflection: [reflection; 3],
        source: [centre[0] + distance, centre[1] + 0.3, 1.6],
        mics: circular_array(centre, radius, mics),
        sample_rate,
        sound_speed: crate::roomsim::SPEED_OF_SOUND,
        max_order: 40,
        max_duration: None,
    }
}
