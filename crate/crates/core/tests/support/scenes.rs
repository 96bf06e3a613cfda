//! Seeded acoustic scenes and the measurements taken on them.

#![allow(dead_code)]

use ffsv_core::audio::MultichannelWaveform;
use ffsv_core::beamform::{apply_beamformer, cgmm_fit_bin, cgmm_mvdr, CgmmConfig, CgmmInit};
use ffsv_core::dsp::{istft, stft, StftConfig};
use ffsv_core::roomsim::{convolve_rir, image_arrivals, reflection_for_t60, simulate_rir, RoomConfig, SPEED_OF_SOUND};
use ffsv_core::synth::{power_ratio_db, projection_ratio_db, reverberant_scene, scene_room, utterance, white_noise, Voice};
use ffsv_core::wpe::{wpe_detailed, WpeConfig};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn cn(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// Largest deviation (delay in samples, amplitude) between the simulator's
/// order-one arrivals and the six mirror images worked out by hand.
pub fn order_one_arrival_error() -> (usize, f64, f64) {
    let room = RoomConfig {
        dimensions: [5.0, 4.0, 3.0],
        reflection: [0.9, 0.7, 0.5],
        source: [1.0, 1.5, 1.2],
        mics: vec![[3.5, 2.0, 1.4]],
        sample_rate: 16000,
        sound_speed: SPEED_OF_SOUND,
        max_order: 1,
        max_duration: None,
    };
    let (s, m) = (room.source, room.mics[0]);
    let mut expected = vec![(s, 1.0)];
    for axis in 0..3 {
        for wall in [0.0, room.dimensions[axis]] {
            let mut img = s;
            img[axis] = 2.0 * wall - s[axis];
            expected.push((img, room.reflection[axis]));
        }
    }
    let mut expected: Vec<(f64, f64)> = expected
        .iter()
        .map(|(p, beta)| {
            let d = ((p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2) + (p[2] - m[2]).powi(2)).sqrt();
            (d / 343.0 * 16000.0, beta / (4.0 * std::f64::consts::PI * d))
        })
        .collect();
    expected.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut got: Vec<(f64, f64)> = image_arrivals(&room, 0).unwrap().iter().map(|a| (a.delay_samples, a.amplitude)).collect();
    got.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut dd, mut da) = (0.0f64, 0.0f64);
    for (g, e) in got.iter().zip(&expected) {
        dd = dd.max((g.0 - e.0).abs());
        da = da.max((g.1 - e.1).abs());
    }
    (got.len(), dd, da)
}

pub struct FreeField {
    pub distance: f64,
    /// Sum of the fractional-delay pulse.
    pub area: f64,
    pub analytic: f64,
    pub peak: f64,
    /// |peak index - d / c * fs|
    pub peak_offset: f64,
}

pub fn free_field(distances: &[f64]) -> Vec<FreeField> {
    distances
        .iter()
        .map(|&d| {
            let room = RoomConfig {
                dimensions: [10.0, 10.0, 10.0],
                reflection: [0.0; 3],
                source: [2.0, 5.0, 5.0],
                mics: vec![[2.0 + d, 5.0, 5.0]],
                sample_rate: 16000,
                sound_speed: SPEED_OF_SOUND,
                max_order: 0,
                max_duration: None,
            };
            let rir = simulate_rir(&room).unwrap();
            let h = &rir.responses()[0];
            let delay = d / SPEED_OF_SOUND * 16000.0;
            let (at, peak) = h.iter().enumerate().fold((0, 0.0f64), |b, (i, &v)| if v.abs() > b.1.abs() { (i, v) } else { b });
            FreeField {
                distance: d,
                area: h.iter().sum(),
                analytic: 1.0 / (4.0 * std::f64::consts::PI * d),
                peak,
                peak_offset: (at as f64 - delay).abs(),
            }
        })
        .collect()
}

/// Relative change WPE makes to 40 s of anechoic white noise, and the median
/// per-bin filter norm.
pub fn wpe_anechoic() -> (f64, f64) {
    // The least-squares fit explains roughly taps / frames of a white
    // signal's energy by chance, so the recording must be long.
    let fs = 16000;
    let mut room = scene_room([6.0, 5.0, 3.0], 0.0, 2.0, 0.05, 1, fs);
    room.max_order = 0;
    let src = white_noise(1, 40 * fs as usize, 0.1, 3).remove(0);
    let scene = reverberant_scene(&src, &room, 4.0).unwrap();
    let s = stft(&scene.observed, &StftConfig::default()).unwrap();
    let out = wpe_detailed(&s, &WpeConfig::default()).unwrap();
    let diff: f64 = s.values().iter().zip(out.dereverberated.values()).map(|(a, b)| (a - b).norm_sqr()).sum();
    let norm: f64 = s.values().iter().map(|a| a.norm_sqr()).sum();
    let mut filters = out.filter_norms.clone();
    filters.sort_by(f64::total_cmp);
    ((diff / norm).sqrt(), filters[filters.len() / 2])
}

pub struct Dereverb {
    pub t60: f64,
    pub drr_before: f64,
    pub drr_after: f64,
    /// Every bin's objective sequence is non-increasing.
    pub monotone: bool,
}

/// Four-microphone room with T60 = 0.5 s, source 2 m away.
pub fn wpe_dereverb() -> Dereverb {
    let fs = 16000;
    let voice = Voice::random(&mut ChaCha8Rng::seed_from_u64(1));
    let src = utterance(&voice, 3.0, fs, 101).unwrap();
    let dims = [6.0, 5.0, 3.0];
    let mut room = scene_room(dims, reflection_for_t60(dims, 0.5).unwrap(), 2.0, 0.05, 4, fs);
    room.max_order = 80;
    room.max_duration = Some(0.6);
    let scene = reverberant_scene(&src, &room, 4.0).unwrap();
    let out = wpe_detailed(&stft(&scene.observed, &StftConfig::default()).unwrap(), &WpeConfig::default()).unwrap();
    let monotone = out.objectives.iter().all(|o| o.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
    let y = istft(&out.dereverberated).unwrap();
    let r = 512..y.len() - 512;
    Dereverb {
        t60: room.sabine_t60(),
        drr_before: projection_ratio_db(&scene.observed.channel(0)[r.clone()], &scene.direct.channel(0)[r.clone()]),
        drr_after: projection_ratio_db(&y.channel(0)[r.clone()], &scene.direct.channel(0)[r]),
        monotone,
    }
}

/// Cases (out of 100 random bins) whose CGMM log-likelihood ever decreases.
pub fn cgmm_non_monotone_cases() -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut bad = 0;
    for case in 0..100 {
        let ch = rng.random_range(2..=4);
        let frames = rng.random_range(2 * ch..60);
        let x: Vec<Vec<Complex64>> = (0..ch).map(|_| (0..frames).map(|_| cn(&mut rng)).collect()).collect();
        let init: Vec<f64> = (0..frames).map(|_| rng.random_range(0.05..0.95)).collect();
        let cfg = CgmmConfig {
            init: if case % 2 == 0 { CgmmInit::PowerSplit } else { CgmmInit::RandomResponsibility },
            ..Default::default()
        };
        let fit = cgmm_fit_bin(&x, &init, &cfg).unwrap();
        if fit.log_likelihoods.windows(2).any(|w| w[1] < w[0] - 1e-9 * w[0].abs().max(1.0)) {
            bad += 1;
        }
    }
    bad
}

pub struct Beamformed {
    pub snr_before: f64,
    pub snr_after: f64,
    /// max |w^H d - 1| over bins
    pub distortion: f64,
}

/// Speech in a mildly reverberant room on a four-microphone array, white
/// sensor noise at 0 dB on the reference microphone.
pub fn cgmm_mvdr_scene() -> Beamformed {
    let fs = 16000;
    let voice = Voice::random(&mut ChaCha8Rng::seed_from_u64(2));
    let src = utterance(&voice, 3.0, fs, 102).unwrap();
    let mut room = scene_room([6.0, 5.0, 3.0], 0.3, 2.0, 0.05, 4, fs);
    room.max_order = 20;
    room.max_duration = Some(0.3);
    let clean = convolve_rir(&MultichannelWaveform::mono(src, fs).unwrap(), &simulate_rir(&room).unwrap()).unwrap();
    let ps = clean.channel(0).iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
    let noise = MultichannelWaveform::new(white_noise(4, clean.len(), ps.sqrt(), 9), fs).unwrap();
    let mix: Vec<Vec<f64>> = clean
        .channels()
        .iter()
        .zip(noise.channels())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    let mix = MultichannelWaveform::new(mix, fs).unwrap();
    let cfg = StftConfig::default();
    let r = cgmm_mvdr(&stft(&mix, &cfg).unwrap(), &CgmmConfig::default()).unwrap();
    let yc = istft(&apply_beamformer(&stft(&clean, &cfg).unwrap(), &r.weights).unwrap()).unwrap();
    let yn = istft(&apply_beamformer(&stft(&noise, &cfg).unwrap(), &r.weights).unwrap()).unwrap();
    let span = 512..yc.len() - 512;
    Beamformed {
        snr_before: power_ratio_db(&clean.channel(0)[span.clone()], &noise.channel(0)[span.clone()]),
        snr_after: power_ratio_db(&yc.channel(0)[span.clone()], &yn.channel(0)[span]),
        distortion: r.weights.max_distortion(),
    }
}
