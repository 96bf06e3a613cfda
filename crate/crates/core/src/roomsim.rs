//! Image-source room impulse responses and waveform augmentation.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::audio::MultichannelWaveform;
use crate::error::{invalid, Error, Result};
use crate::par;

pub const SPEED_OF_SOUND: f64 = 343.0;
/// Half-width, in samples, of the fractional-delay kernel (8 taps).
const DELAY_HALF_WIDTH: i64 = 4;
/// Half-width of the resampling kernel (16 taps).
const RESAMPLE_HALF_WIDTH: i64 = 8;

pub type Point = [f64; 3];

/// Shoebox room with one reflection coefficient per wall pair (x, y, z).
#[derive(Debug, Clone, PartialEq)]
pub struct RoomConfig {
    pub dimensions: Point,
    pub reflection: [f64; 3],
    pub source: Point,
    pub mics: Vec<Point>,
    pub sample_rate: u32,
    pub sound_speed: f64,
    pub max_order: usize,
    /// Truncates the response; `None` keeps every arrival up to `max_order`.
    pub max_duration: Option<f64>,
}

fn inside(p: &Point, dims: &Point) -> bool {
    p.iter().zip(dims).all(|(&v, &l)| v > 0.0 && v < l)
}

fn dist(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

impl RoomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|&d| !(d > 0.0)) {
            return invalid("room dimensions must be positive");
        }
        if self.reflection.iter().any(|&b| !(0.0..1.0).contains(&b)) {
            return invalid("reflection coefficients must lie in [0, 1)");
        }
        if self.sample_rate == 0 || !(self.sound_speed > 0.0) {
            return invalid("sample rate and sound speed must be positive");
        }
        if self.mics.is_empty() {
            return invalid("at least one microphone is required");
        }
        if !inside(&self.source, &self.dimensions) {
            return invalid("source outside the room");
        }
        for (i, m) in self.mics.iter().enumerate() {
            if !inside(m, &self.dimensions) {
                return invalid(format!("microphone {i} outside the room"));
            }
            if dist(m, &self.source) < 1e-9 {
                return invalid(format!("source coincides with microphone {i}"));
            }
        }
        Ok(())
    }

    /// Reverberation time predicted by Sabine's formula.
    pub fn sabine_t60(&self) -> f64 {
        let [lx, ly, lz] = self.dimensions;
        let volume = lx * ly * lz;
        let areas = [ly * lz, lx * lz, lx * ly];
        let absorption: f64 = areas
            .iter()
            .zip(&self.reflection)
            .map(|(s, b)| 2.0 * s * (1.0 - b * b))
            .sum();
        0.161 * volume / absorption
    }

    /// Line-oriented `key=value` text.
    pub fn to_text(&self) -> String {
        let fmt3 = |p: &Point| format!("{} {} {}", p[0], p[1], p[2]);
        let mut s = String::new();
        writeln!(s, "dimensions={}", fmt3(&self.dimensions)).unwrap();
        writeln!(s, "reflection={}", fmt3(&self.reflection)).unwrap();
        writeln!(s, "source={}", fmt3(&self.source)).unwrap();
        for m in &self.mics {
            writeln!(s, "mic={}", fmt3(m)).unwrap();
        }
        writeln!(s, "sample_rate={}", self.sample_rate).unwrap();
        writeln!(s, "sound_speed={}", self.sound_speed).unwrap();
        writeln!(s, "max_order={}", self.max_order).unwrap();
        if let Some(d) = self.max_duration {
            writeln!(s, "max_duration={d}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        fn triple(v: &str) -> Result<Point> {
            let parts: Vec<f64> = v
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad number '{x}'"))))
                .collect::<Result<_>>()?;
            if parts.len() != 3 {
                return invalid(format!("expected three values, got '{v}'"));
            }
            Ok([parts[0], parts[1], parts[2]])
        }
        let mut dims = None;
        let mut refl = None;
        let mut source = None;
        let mut mics = Vec::new();
        let mut sample_rate = None;
        let mut sound_speed = SPEED_OF_SOUND;
        let mut max_order = None;
        let mut max_duration = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("expected key=value, got '{line}'")))?;
            let v = v.trim();
            let num_err = || Error::InvalidInput(format!("bad value for {k}: '{v}'"));
            match k.trim() {
                "dimensions" => dims = Some(triple(v)?),
                "reflection" => refl = Some(triple(v)?),
                "source" => source = Some(triple(v)?),
                "mic" => mics.push(triple(v)?),
                "sample_rate" => sample_rate = Some(v.parse().map_err(|_| num_err())?),
                "sound_speed" => sound_speed = v.parse().map_err(|_| num_err())?,
                "max_order" => max_order = Some(v.parse().map_err(|_| num_err())?),
                "max_duration" => max_duration = Some(v.parse().map_err(|_| num_err())?),
                other => return invalid(format!("unknown room key '{other}'")),
            }
        }
        let missing = |k: &str| Error::InvalidInput(format!("room is missing '{k}'"));
        let room = RoomConfig {
            dimensions: dims.ok_or_else(|| missing("dimensions"))?,
            reflection: refl.ok_or_else(|| missing("reflection"))?,
            source: source.ok_or_else(|| missing("source"))?,
            mics,
            sample_rate: sample_rate.ok_or_else(|| missing("sample_rate"))?,
            sound_speed,
            max_order: max_order.ok_or_else(|| missing("max_order"))?,
            max_duration,
        };
        room.validate()?;
        Ok(room)
    }
}

/// Serializes several rooms, one `[room]` block each.
pub fn rooms_to_text(rooms: &[RoomConfig]) -> String {
    rooms
        .iter()
        .map(|r| format!("[room]\n{}", r.to_text()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn rooms_from_text(text: &str) -> Result<Vec<RoomConfig>> {
    text.split("[room]")
        .filter(|b| !b.trim().is_empty())
        .map(RoomConfig::from_text)
        .collect()
}

/// Reflection coefficient giving a target Sabine T60 with uniform walls.
pub fn reflection_for_t60(dimensions: Point, t60: f64) -> Result<f64> {
    let [lx, ly, lz] = dimensions;
    let surface = 2.0 * (lx * ly + lx * lz + ly * lz);
    let alpha = 0.161 * lx * ly * lz / (surface * t60);
    if !(alpha > 0.0 && alpha <= 1.0) {
        return invalid(format!("T60 {t60} s not reachable in this room"));
    }
    Ok((1.0 - alpha).sqrt())
}

/// One image-source arrival at a microphone, before interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub delay_samples: f64,
    pub amplitude: f64,
    pub order: usize,
}

/// Enumerates image sources up to `max_order` reflections for one mic.
pub fn image_arrivals(room: &RoomConfig, mic: usize) -> Result<Vec<Arrival>> {
    room.validate()?;
    let m = room.mics.get(mic).ok_or_else(|| Error::InvalidInput(format!("no microphone {mic}")))?;
    let fs = f64::from(room.sample_rate);
    let max_delay = room.max_duration.map(|d| d * fs);
    let span = (room.max_order as i64 + 1) / 2 + 1;
    // per axis: (coordinate, reflection count)
    let axis_images: Vec<Vec<(f64, usize)>> = (0..3)
        .map(|a| {
            let l = room.dimensions[a];
            let s = room.source[a];
            let mut v = Vec::new();
            for n in -span..=span {
                v.push((2.0 * n as f64 * l + s, (2 * n.abs()) as usize));
                v.push((2.0 * n as f64 * l - s, ((n - 1).abs() + n.abs()) as usize));
            }
            v.retain(|&(_, r)| r <= room.max_order);
            v
        })
        .collect();
    let mut out = Vec::new();
    for &(x, rx) in &axis_images[0] {
        for &(y, ry) in &axis_images[1] {
            if rx + ry > room.max_order {
                continue;
            }
            for &(z, rz) in &axis_images[2] {
                let order = rx + ry + rz;
                if order > room.max_order {
                    continue;
                }
                let d = dist(&[x, y, z], m);
                let delay = d / room.sound_speed * fs;
                if max_delay.is_some_and(|md| delay >= md) {
                    continue;
                }
                let gain = room.reflection[0].powi(rx as i32)
                    * room.reflection[1].powi(ry as i32)
                    * room.reflection[2].powi(rz as i32);
                if gain == 0.0 && order > 0 {
                    continue;
                }
                out.push(Arrival {
                    delay_samples: delay,
                    amplitude: gain / (4.0 * PI * d),
                    order,
                });
            }
        }
    }
    out.sort_by(|a, b| a.delay_samples.total_cmp(&b.delay_samples));
    Ok(out)
}

/// Hann-windowed sinc fractional-delay kernel value at offset `x` samples.
pub fn delay_kernel(x: f64) -> f64 {
    let hw = DELAY_HALF_WIDTH as f64;
    if x.abs() >= hw {
        return 0.0;
    }
    sinc(x) * 0.5 * (1.0 + (PI * x / hw).cos())
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Per-microphone impulse responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    responses: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl Rir {
    /// Builds a response set; shorter responses are zero padded.
    pub fn new(mut responses: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        let len = responses.iter().map(Vec::len).max().unwrap_or(0);
        if len == 0 {
            return invalid("empty impulse response");
        }
        if responses.iter().flatten().any(|v| !v.is_finite()) {
            return invalid("impulse response contains non-finite values");
        }
        for r in &mut responses {
            r.resize(len, 0.0);
        }
        Ok(Self {
            responses,
            sample_rate,
        })
    }

    pub fn responses(&self) -> &[Vec<f64>] {
        &self.responses
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.responses[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_mics(&self) -> usize {
        self.responses.len()
    }

    pub fn to_waveform(&self) -> Result<MultichannelWaveform> {
        MultichannelWaveform::new(self.responses.clone(), self.sample_rate)
    }

    pub fn from_waveform(w: &MultichannelWaveform) -> Result<Self> {
        Self::new(w.channels().to_vec(), w.sample_rate())
    }

    /// Splits every response at `split` samples after its first arrival.
    pub fn split_direct(&self, first_arrival: &[f64], split: usize) -> (Rir, Rir) {
        let mut direct = self.responses.clone();
        let mut tail = self.responses.clone();
        for (m, resp) in self.responses.iter().enumerate() {
            let cut = (first_arrival[m].round() as usize + split).min(resp.len());
            direct[m][cut..].iter_mut().for_each(|v| *v = 0.0);
            tail[m][..cut].iter_mut().for_each(|v| *v = 0.0);
        }
        (
            Rir { responses: direct, sample_rate: self.sample_rate },
            Rir { responses: tail, sample_rate: self.sample_rate },
        )
    }
}

/// Image-source impulse responses for every microphone of the room.
pub fn simulate_rir(room: &RoomConfig) -> Result<Rir> {
    room.validate()?;
    let fs = f64::from(room.sample_rate);
    let arrivals: Vec<Vec<Arrival>> = (0..room.mics.len())
        .map(|m| image_arrivals(room, m))
        .collect::<Result<_>>()?;
    let len = match room.max_duration {
        Some(d) => (d * fs).ceil() as usize,
        None => {
            let last = arrivals
                .iter()
                .flatten()
                .map(|a| a.delay_samples)
                .fold(0.0, f64::max);
            last.ceil() as usize + DELAY_HALF_WIDTH as usize + 1
        }
    };
    let responses = par::map_slice(&arrivals, |arr| {
        let mut h = vec![0.0; len];
        for a in arr {
            let base = a.delay_samples.floor() as i64;
            for n in base - DELAY_HALF_WIDTH + 1..=base + DELAY_HALF_WIDTH {
                if n < 0 || n as usize >= len {
                    continue;
                }
                h[n as usize] += a.amplitude * delay_kernel(n as f64 - a.delay_samples);
            }
        }
        h
    });
    Rir::new(responses, room.sample_rate)
}

/// Linear convolution via zero-padded FFT.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    if x.len().min(h.len()) <= 32 {
        return direct_convolve(x, h);
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(n, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    inv.process(&mut a);
    a.iter().take(out_len).map(|z| z.re / n as f64).collect()
}

fn direct_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, &xv) in x.iter().enumerate() {
        for (j, &hv) in h.iter().enumerate() {
            y[i + j] += xv * hv;
        }
    }
    y
}

/// Convolves a mono waveform with each microphone's response.
pub fn convolve_rir(w: &MultichannelWaveform, r: &Rir) -> Result<MultichannelWaveform> {
    if w.num_channels() != 1 {
        return invalid("reverberation needs a mono source");
    }
    if w.sample_rate() != r.sample_rate() {
        return invalid(format!(
            "sample rate mismatch: {} vs {}",
            w.sample_rate(),
            r.sample_rate()
        ));
    }
    let x = w.channel(0);
    let channels = par::map_slice(r.responses(), |h| fft_convolve(x, h));
    MultichannelWaveform::new(channels, w.sample_rate())
}

fn fit_noise(noise: &MultichannelWaveform, channels: usize, len: usize) -> Result<Vec<Vec<f64>>> {
    if noise.is_empty() {
        return invalid("empty noise");
    }
    if noise.num_channels() != channels && noise.num_channels() != 1 {
        return invalid(format!(
            "noise has {} channels, signal has {channels}",
            noise.num_channels()
        ));
    }
    Ok((0..channels)
        .map(|c| {
            let src = noise.channel(if noise.num_channels() == 1 { 0 } else { c });
            src.iter().cycle().take(len).copied().collect()
        })
        .collect())
}

/// Adds noise scaled to the requested SNR; returns the mixture and the
/// scaled noise that was added.
pub fn mix_noise_parts(
    w: &MultichannelWaveform,
    noise: &MultichannelWaveform,
    snr_db: f64,
) -> Result<(MultichannelWaveform, MultichannelWaveform)> {
    if !snr_db.is_finite() {
        return invalid("SNR must be finite");
    }
    if noise.sample_rate() != w.sample_rate() {
        return invalid("noise sample rate differs from signal");
    }
    let fitted = fit_noise(noise, w.num_channels(), w.len())?;
    let fitted = MultichannelWaveform::new(fitted, w.sample_rate())?;
    let ps = w.power();
    let pn = fitted.power();
    if ps == 0.0 || pn == 0.0 {
        return Err(Error::Degenerate("zero-power signal or noise".into()));
    }
    let scale = (ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled = fitted.scaled(scale);
    let mixed = w
        .channels()
        .iter()
        .zip(scaled.channels())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    Ok((MultichannelWaveform::new(mixed, w.sample_rate())?, scaled))
}

pub fn mix_noise(
    w: &MultichannelWaveform,
    noise: &MultichannelWaveform,
    snr_db: f64,
) -> Result<MultichannelWaveform> {
    Ok(mix_noise_parts(w, noise, snr_db)?.0)
}

/// Speed perturbation: resamples so the output lasts `1/factor` as long and
/// every frequency is multiplied by `factor`.
pub fn speed_perturb(w: &MultichannelWaveform, factor: f64) -> Result<MultichannelWaveform> {
    if !(factor > 0.0) || !factor.is_finite() {
        return invalid("speed factor must be positive");
    }
    let out_len = (w.len() as f64 / factor).round() as usize;
    if out_len == 0 {
        return invalid("speed factor leaves an empty waveform");
    }
    let cutoff = (1.0 / factor).min(1.0);
    let hw = RESAMPLE_HALF_WIDTH as f64;
    let channels = w
        .channels()
        .iter()
        .map(|x| {
            (0..out_len)
                .map(|j| {
                    let p = j as f64 * factor;
                    let base = p.floor() as i64;
                    let mut acc = 0.0;
                    for n in base - RESAMPLE_HALF_WIDTH + 1..=base + RESAMPLE_HALF_WIDTH {
                        if n < 0 || n as usize >= x.len() {
                            continue;
                        }
                        let d = p - n as f64;
                        if d.abs() >= hw {
                            continue;
                        }
                        let win = 0.5 * (1.0 + (PI * d / hw).cos());
                        acc += x[n as usize] * cutoff * sinc(cutoff * d) * win;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    MultichannelWaveform::new(channels, w.sample_rate())
}

/// Waveform augmentation recipe.
#[derive(Debug, Clone)]
pub struct AugmentSpec {
    pub rir: Option<Rir>,
    pub noise: Option<MultichannelWaveform>,
    pub snr_db: f64,
    pub speed_factor: f64,
}

pub const DEFAULT_SPEED_FACTORS: [f64; 3] = [0.9, 1.0, 1.1];

/// Applies speed change, reverberation, then noise.
pub fn augment(w: &MultichannelWaveform, spec: &AugmentSpec) -> Result<MultichannelWaveform> {
    if !(spec.speed_factor > 0.0) {
        return invalid("speed factor must be positive");
    }
    let mut out = if spec.speed_factor == 1.0 {
        w.clone()
    } else {
        speed_perturb(w, spec.speed_factor)?
    };
    if let Some(r) = &spec.rir {
        out = convolve_rir(&out, r)?;
    }
    if let Some(n) = &spec.noise {
        out = mix_noise(&out, n, spec.snr_db)?;
    }
    Ok(out)
}

/// Sampling ranges for random rooms. Each range is `(low, high)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomRanges {
    pub length: (f64, f64),
    pub width: (f64, f64),
    pub height: (f64, f64),
    pub reflection: (f64, f64),
    pub source_distance: (f64, f64),
    pub azimuth: (f64, f64),
    /// Array centre as a fraction of the room's length and width.
    pub array_position: (f64, f64),
    pub array_height: (f64, f64),
    pub source_height: (f64, f64),
    pub array_radius: f64,
    pub num_mics: usize,
    pub sample_rate: u32,
    pub max_order: usize,
    pub max_duration: Option<f64>,
}

impl Default for RoomRanges {
    fn default() -> Self {
        Self {
            length: (3.0, 8.0),
            width: (3.0, 8.0),
            height: (2.5, 4.0),
            reflection: (0.2, 0.9),
            source_distance: (1.0, 5.0),
            azimuth: (0.0, 2.0 * PI),
            array_position: (0.3, 0.7),
            array_height: (0.8, 1.5),
            source_height: (1.2, 1.8),
            array_radius: 0.05,
            num_mics: 4,
            sample_rate: 16000,
            max_order: 12,
            max_duration: Some(0.5),
        }
    }
}

impl RoomRanges {
    fn validate(&self) -> Result<()> {
        let ranges = [
            ("length", self.length),
            ("width", self.width),
            ("height", self.height),
            ("reflection", self.reflection),
            ("source_distance", self.source_distance),
            ("azimuth", self.azimuth),
            ("array_position", self.array_position),
            ("array_height", self.array_height),
            ("source_height", self.source_height),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return invalid(format!("degenerate range for {name}: ({lo}, {hi})"));
            }
        }
        if self.length.0 <= 0.0 || self.width.0 <= 0.0 || self.height.0 <= 0.0 {
            return invalid("room dimensions must be positive");
        }
        if self.reflection.0 < 0.0 || self.reflection.1 >= 1.0 {
            return invalid("reflection range must lie in [0, 1)");
        }
        if self.source_distance.0 <= 0.0 {
            return invalid("source distance must be positive");
        }
        if self.array_position.0 <= 0.0 || self.array_position.1 >= 1.0 {
            return invalid("array position fractions must lie in (0, 1)");
        }
        if self.num_mics == 0 || self.sample_rate == 0 {
            return invalid("need at least one microphone and a sample rate");
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Draws `n_rooms` rooms with a circular microphone array; deterministic in
/// `seed`.
pub fn sample_room_configs(n_rooms: usize, seed: u64, ranges: &RoomRanges) -> Result<Vec<RoomConfig>> {
    if n_rooms == 0 {
        return invalid("need at least one room");
    }
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margin = 0.1;
    (0..n_rooms)
        .map(|_| {
            let dims = [
                uniform(&mut rng, ranges.length),
                uniform(&mut rng, ranges.width),
                uniform(&mut rng, ranges.height),
            ];
            let reflection = [
                uniform(&mut rng, ranges.reflection),
                uniform(&mut rng, ranges.reflection),
                uniform(&mut rng, ranges.reflection),
            ];
            let centre = [
                uniform(&mut rng, ranges.array_position) * dims[0],
                uniform(&mut rng, ranges.array_position) * dims[1],
                uniform(&mut rng, ranges.array_height).min(dims[2] - margin),
            ];
            let source_z = uniform(&mut rng, ranges.source_height).min(dims[2] - margin);
            let fits = |p: &Point| p.iter().zip(&dims).all(|(&v, &l)| v >= margin && v <= l - margin);
            let mut source = None;
            let mut last_az = 0.0;
            for _ in 0..64 {
                let d = uniform(&mut rng, ranges.source_distance);
                let az = uniform(&mut rng, ranges.azimuth);
                last_az = az;
                let p = [centre[0] + d * az.cos(), centre[1] + d * az.sin(), source_z];
                if fits(&p) {
                    source = Some(p);
                    break;
                }
            }
            let source = match source {
                Some(p) => p,
                None => {
                    // shrink the distance along the last direction until it fits
                    let mut d = ranges.source_distance.0;
                    let mut p = [centre[0] + d * last_az.cos(), centre[1] + d * last_az.sin(), source_z];
                    while !fits(&p) && d > 0.2 {
                        d *= 0.9;
                        p = [centre[0] + d * last_az.cos(), centre[1] + d * last_az.sin(), source_z];
                    }
                    p
                }
            };
            let mics = (0..ranges.num_mics)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / ranges.num_mics as f64;
                    [
                        centre[0] + ranges.array_radius * a.cos(),
                        centre[1] + ranges.array_radius * a.sin(),
                        centre[2],
                    ]
                })
                .collect();
            let room = RoomConfig {
                dimensions: dims,
                reflection,
                source,
                mics,
                sample_rate: ranges.sample_rate,
                sound_speed: SPEED_OF_SOUND,
                max_order: ranges.max_order,
                max_duration: ranges.max_duration,
            };
            room.validate()?;
            Ok(room)
        })
        .collect()
}
