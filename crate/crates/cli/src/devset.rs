//! Seeded synthetic development set: close-talk and simulated far-field
//! training speech, close-talk enrollment and array test recordings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ffsv_core::audio::{read_wav, write_wav, Encoding, MultichannelWaveform};
use ffsv_core::eval::{format_trials, Trial};
use ffsv_core::par;
use ffsv_core::roomsim::{convolve_rir, mix_noise, sample_room_configs, simulate_rir, RoomRanges};
use ffsv_core::synth::{utterance, white_noise, Voice};
use ffsv_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{format_manifest, format_utterance_map, ManifestEntry};

pub const NEAR: &str = "near";
pub const FAR: &str = "far";

/// Files of a generated devset, relative to its root.
#[derive(Debug, Clone)]
pub struct Devset {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub utterances: PathBuf,
    pub trials: PathBuf,
    pub train: Vec<ManifestEntry>,
    pub enroll: BTreeMap<String, Vec<String>>,
    /// Test utterance ids with their file, in trial order.
    pub tests: Vec<(String, String)>,
    pub trial_list: Vec<Trial>,
}

fn peak_normalize(w: MultichannelWaveform, peak: f64) -> Result<MultichannelWaveform> {
    let m = w
        .channels()
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(if m > 0.0 { w.scaled(peak / m) } else { w })
}

fn far_field(
    clean: &[f64],
    ranges: &RoomRanges,
    room_seed: u64,
    snr_db: f64,
    noise_seed: u64,
    sample_rate: u32,
) -> Result<MultichannelWaveform> {
    let room = sample_room_configs(1, room_seed, ranges)?.remove(0);
    let rir = simulate_rir(&room)?;
    let src = MultichannelWaveform::mono(clean.to_vec(), sample_rate)?;
    let wet = convolve_rir(&src, &rir)?;
    // trim the convolution tail so lengths match the dry signal
    let wet = MultichannelWaveform::new(
        wet.channels().iter().map(|c| c[..clean.len()].to_vec()).collect(),
        sample_rate,
    )?;
    let noise = MultichannelWaveform::new(white_noise(wet.num_channels(), wet.len(), 1.0, noise_seed), sample_rate)?;
    peak_normalize(mix_noise(&wet, &noise, snr_db)?, 0.5)
}

fn write(root: &Path, rel: &str, w: &MultichannelWaveform) -> CliResult<()> {
    let path = root.join(rel);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    write_wav(w, &path, Encoding::Float32)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn voices(n: usize, seed: u64) -> Vec<Voice> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Voice::random(&mut rng)).collect()
}

/// Generates the devset under `root` as float32 WAV files plus a training
/// manifest, an utterance map and a labelled trial list.
pub fn generate(cfg: &PipelineConfig, root: &Path) -> CliResult<Devset> {
    let d = &cfg.devset;
    let fs = d.sample_rate;
    let seed = cfg.seed;
    let mono_rooms = RoomRanges { num_mics: 1, sample_rate: fs, ..cfg.rooms.clone() };
    let array_rooms = RoomRanges { sample_rate: fs, ..cfg.rooms.clone() };
    if array_rooms.num_mics < 2 {
        return Err(CliError::Config("room.num_mics must be at least 2 for array test recordings".into()));
    }

    let train_voices = voices(d.train_speakers, seed.wrapping_add(100));
    let jobs: Vec<(usize, usize)> = (0..d.train_speakers)
        .flat_map(|s| (0..d.train_utterances).map(move |u| (s, u)))
        .collect();
    let (snr_lo, snr_hi) = cfg.simulate.snr_db;
    let made = par::map_slice(&jobs, |&(s, u)| -> CliResult<Vec<ManifestEntry>> {
        let k = (s * d.train_utterances + u) as u64;
        let clean = utterance(&train_voices[s], d.duration, fs, seed.wrapping_add(10_000 + k))?;
        let snr = snr_lo + (snr_hi - snr_lo) * ((k * 7919) % 97) as f64 / 96.0;
        let far = far_field(&clean, &mono_rooms, seed.wrapping_add(20_000 + k), snr, seed.wrapping_add(30_000 + k), fs)?;
        let near_rel = format!("train/s{s:03}_u{u:02}_{NEAR}.wav");
        let far_rel = format!("train/s{s:03}_u{u:02}_{FAR}.wav");
        write(root, &near_rel, &MultichannelWaveform::mono(clean, fs)?)?;
        write(root, &far_rel, &far)?;
        let spk = format!("train{s:03}");
        Ok(vec![
            ManifestEntry { wav: near_rel, speaker: spk.clone(), domain: Some(NEAR.into()) },
            ManifestEntry { wav: far_rel, speaker: spk, domain: Some(FAR.into()) },
        ])
    });
    let mut train = Vec::new();
    for m in made {
        train.extend(m?);
    }

    let eval_voices = voices(d.eval_speakers, seed.wrapping_add(200));
    let mut enroll: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut tests = Vec::new();
    let mut jobs = Vec::new();
    for s in 0..d.eval_speakers {
        for u in 0..d.enroll_utterances {
            jobs.push((s, u, false));
        }
        for u in 0..d.test_utterances {
            jobs.push((s, u, true));
        }
    }
    let made = par::map_slice(&jobs, |&(s, u, test)| -> CliResult<(String, String)> {
        let k = (s * 100 + u) as u64 + if test { 50 } else { 0 };
        let clean = utterance(&eval_voices[s], d.duration, fs, seed.wrapping_add(40_000 + k))?;
        if test {
            let w = far_field(&clean, &array_rooms, seed.wrapping_add(50_000 + k), d.snr_db, seed.wrapping_add(60_000 + k), fs)?;
            let rel = format!("eval/test/s{s:03}_t{u:02}.wav");
            write(root, &rel, &w)?;
            Ok((format!("test{s:03}_{u:02}"), rel))
        } else {
            let rel = format!("eval/enroll/s{s:03}_e{u:02}.wav");
            write(root, &rel, &MultichannelWaveform::mono(clean, fs)?)?;
            Ok((format!("enroll{s:03}"), rel))
        }
    });
    for ((_, _, test), r) in jobs.iter().zip(made) {
        let (id, rel) = r?;
        if *test {
            tests.push((id, rel));
        } else {
            enroll.entry(id).or_default().push(rel);
        }
    }

    let mut trial_list = Vec::new();
    for e in 0..d.eval_speakers {
        for s in 0..d.eval_speakers {
            for u in 0..d.test_utterances {
                trial_list.push(Trial {
                    enroll: format!("enroll{e:03}"),
                    test: format!("test{s:03}_{u:02}"),
                    label: Some(e == s),
                });
            }
        }
    }
    let manifest = root.join("train.lst");
    let utterances = root.join("utterances.lst");
    let trials = root.join("trials.lst");
    write_text(&manifest, &format_manifest(&train))?;
    let mut map = enroll.clone();
    for (id, rel) in &tests {
        map.insert(id.clone(), vec![rel.clone()]);
    }
    write_text(&utterances, &format_utterance_map(&map))?;
    write_text(&trials, &format_trials(&trial_list))?;
    Ok(Devset { root: root.to_path_buf(), manifest, utterances, trials, train, enroll, tests, trial_list })
}

/// Reads a devset file back, so every consumer sees the float32 samples.
pub fn load(root: &Path, rel: &str) -> Result<MultichannelWaveform> {
    read_wav(root.join(rel))
}
