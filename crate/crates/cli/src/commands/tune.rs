use std::collections::BTreeMap;
use std::fmt::Write as _;

use ffsv_core::audio::{read_wav, MultichannelWaveform};
use ffsv_core::eval::{average_embeddings, format_sig9, tune_theta, DevPair, Embedding, TuneResult};
use ffsv_core::par;
use ffsv_core::roomsim::{convolve_rir, sample_room_configs, simulate_rir, RoomRanges};

use super::{checkpoint_path, write_text};
use crate::config::PipelineConfig;
use crate::devset::NEAR;
use crate::error::{CliError, CliResult};
use crate::manifest::{parse_manifest, read_text};
use crate::pipeline::{embed, load_network};

/// `tune-theta`: grid search of the selection threshold and the simulation
/// room set on a development manifest. Entries whose domain id is `near`
/// are close-talk enrollment; every other entry is far-field test audio.
/// Each room set is one sampled room; the simulated enrollment is the first
/// close-talk file of a speaker convolved with that room's response.
pub fn run(cfg: &PipelineConfig) -> CliResult<TuneResult> {
    let entries = parse_manifest(&read_text(cfg.required("manifest", &cfg.paths.manifest)?)?)?;
    let ckpt = checkpoint_path(cfg);
    let net = load_network(&cfg.net, &ckpt).map_err(|e| CliError::Config(format!("checkpoint {}: {e}", ckpt.display())))?;
    let mut by_speaker: BTreeMap<&str, (Vec<&str>, Vec<&str>)> = BTreeMap::new();
    for e in &entries {
        let slot = by_speaker.entry(e.speaker.as_str()).or_default();
        if e.domain.as_deref() == Some(NEAR) {
            slot.0.push(&e.wav);
        } else {
            slot.1.push(&e.wav);
        }
    }
    if let Some((s, _)) = by_speaker.iter().find(|(_, (n, f))| n.is_empty() || f.is_empty()) {
        return Err(CliError::Config(format!("speaker {s} needs both close-talk and far-field files")));
    }
    let speakers: Vec<(&str, Vec<&str>, Vec<&str>)> =
        by_speaker.into_iter().map(|(s, (n, f))| (s, n, f)).collect();
    let mono = |p: &str| read_wav(cfg.resolve(p)).and_then(|w| w.to_mono(0));
    let mean_embedding = |files: &[&str]| -> ffsv_core::Result<Embedding> {
        let list = files
            .iter()
            .map(|p| embed(&mono(p)?, &net, &cfg.frontend))
            .collect::<ffsv_core::Result<Vec<_>>>()?;
        average_embeddings(&list)
    };
    let pairs = par::map_slice(&speakers, |(s, near, far)| -> ffsv_core::Result<DevPair> {
        Ok(DevPair { speaker: s.to_string(), enrollment: mean_embedding(near)?, test: mean_embedding(far)? })
    })
    .into_iter()
    .collect::<ffsv_core::Result<Vec<_>>>()?;

    let ranges = RoomRanges { num_mics: 1, ..cfg.rooms.clone() };
    let rooms = sample_room_configs(cfg.tune.rir_sets, cfg.seed.wrapping_add(0x7e57), &ranges)
        .map_err(|e| CliError::Config(format!("room ranges: {e}")))?;
    let jobs: Vec<(usize, usize)> = (0..rooms.len()).flat_map(|r| (0..speakers.len()).map(move |i| (r, i))).collect();
    let simulated = par::map_slice(&jobs, |&(r, i)| -> ffsv_core::Result<Embedding> {
        let rir = simulate_rir(&rooms[r])?;
        let src: MultichannelWaveform = mono(speakers[i].1[0])?;
        embed(&convolve_rir(&src, &rir)?, &net, &cfg.frontend)
    })
    .into_iter()
    .collect::<ffsv_core::Result<Vec<_>>>()?;
    let n = speakers.len();
    let result = tune_theta(&pairs, &cfg.tune.thetas, rooms.len(), |set, i| Ok(simulated[set * n + i].clone()))?;

    let mut text = String::from("rir_set\ttheta\teer\n");
    for (set, theta, eer) in &result.grid {
        writeln!(text, "{set}\t{theta}\t{}", format_sig9(*eer)).expect("write to string");
    }
    write_text(&cfg.paths.out_dir.join("tune.tsv"), &text)?;
    write_text(
        &cfg.paths.out_dir.join("tune_best.txt"),
        &format!("theta={} rir_set={} eer={}\n", result.theta, result.rir_set, format_sig9(result.eer)),
    )?;
    log::info!("best theta {} with room set {} (dev EER {:.4})", result.theta, result.rir_set, result.eer);
    Ok(result)
}
