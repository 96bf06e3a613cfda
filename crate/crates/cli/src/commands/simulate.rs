use ffsv_core::audio::{read_wav, write_wav, Encoding, MultichannelWaveform};
use ffsv_core::par;
use ffsv_core::roomsim::{augment, rooms_to_text, sample_room_configs, simulate_rir, AugmentSpec, Rir};
use ffsv_core::synth::white_noise;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ensure_dir, write_text};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{format_manifest, parse_manifest, read_text, ManifestEntry};

/// Per-file augmentation draws, seeded by the run seed and file index.
fn draw(cfg: &PipelineConfig, index: usize, rooms: usize) -> (usize, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed).wrapping_add(index as u64));
    let room = rng.random_range(0..rooms);
    let (lo, hi) = cfg.simulate.snr_db;
    let snr = if lo == hi { lo } else { rng.random_range(lo..hi) };
    let speed = cfg.simulate.speeds[rng.random_range(0..cfg.simulate.speeds.len())];
    (room, snr, speed)
}

/// `simulate`: samples rooms, writes their impulse responses and, when a
/// manifest is configured, a reverberant noisy copy of every listed file
/// (first microphone) with a matching manifest.
pub fn run(cfg: &PipelineConfig) -> CliResult<()> {
    if cfg.simulate.rooms == 0 {
        return Err(CliError::Config("simulate.rooms must be positive".into()));
    }
    let rooms = sample_room_configs(cfg.simulate.rooms, cfg.seed, &cfg.rooms)
        .map_err(|e| CliError::Config(format!("room ranges: {e}")))?;
    let rirs = par::map_slice(&rooms, simulate_rir).into_iter().collect::<ffsv_core::Result<Vec<Rir>>>()?;
    let out = &cfg.paths.out_dir;
    let rir_dir = out.join("rirs");
    ensure_dir(&rir_dir)?;
    write_text(&out.join("rooms.txt"), &rooms_to_text(&rooms))?;
    for (i, r) in rirs.iter().enumerate() {
        write_wav(&r.to_waveform()?, rir_dir.join(format!("room{i:03}.wav")), Encoding::Float32)?;
    }
    log::info!("{} rooms written to {}", rooms.len(), rir_dir.display());

    let Some(manifest) = &cfg.paths.manifest else {
        return Ok(());
    };
    let entries = parse_manifest(&read_text(manifest)?)?;
    let first_mic: Vec<Rir> = rirs
        .iter()
        .map(|r| Rir::new(vec![r.responses()[0].clone()], r.sample_rate()))
        .collect::<ffsv_core::Result<_>>()?;
    let aug_dir = out.join("augmented");
    ensure_dir(&aug_dir)?;
    let made = par::map_range(entries.len(), |i| -> ffsv_core::Result<ManifestEntry> {
        let e = &entries[i];
        let w = read_wav(cfg.resolve(&e.wav))?.to_mono(0)?;
        let (room, snr, speed) = draw(cfg, i, first_mic.len());
        let noise = MultichannelWaveform::new(
            white_noise(1, w.len() * 2, 1.0, cfg.seed.wrapping_add(0xa0a0).wrapping_add(i as u64)),
            w.sample_rate(),
        )?;
        let spec = AugmentSpec { rir: Some(first_mic[room].clone()), noise: Some(noise), snr_db: snr, speed_factor: speed };
        let a = augment(&w, &spec)?;
        let name = format!("aug{i:05}.wav");
        write_wav(&a, aug_dir.join(&name), Encoding::Float32)?;
        Ok(ManifestEntry {
            wav: aug_dir.join(&name).display().to_string(),
            speaker: e.speaker.clone(),
            domain: Some("simulated".into()),
        })
    });
    let mut written = Vec::new();
    let mut failed = 0;
    for (e, r) in entries.iter().zip(made) {
        match r {
            Ok(m) => written.push(m),
            Err(err) => {
                log::error!("{}: {err}", e.wav);
                failed += 1;
            }
        }
    }
    write_text(&out.join("augmented.lst"), &format_manifest(&written))?;
    if failed > 0 {
        return Err(CliError::Partial(format!("{failed} of {} files failed", entries.len())));
    }
    Ok(())
}
