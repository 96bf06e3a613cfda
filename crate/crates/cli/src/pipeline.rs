//! Front end (dereverberation, beamforming, selection) and embedding helpers
//! shared by the subcommands.

use std::path::Path;

use ffsv_core::audio::MultichannelWaveform;
use ffsv_core::beamform::cgmm_mvdr;
use ffsv_core::dsp::{istft, stft, ComplexSpectrogram};
use ffsv_core::eval::{select_enhanced, Decision, Embedding, SelectionPolicy};
use ffsv_core::nn::{extract_embedding, params::parse_checkpoint, Frontend, MicroNet, MicroNetConfig};
use ffsv_core::wpe::wpe;
use ffsv_core::{Error, Result};

use crate::config::{PipelineConfig, Toggles};

fn beamform(s: &ComplexSpectrogram, cfg: &PipelineConfig) -> Result<MultichannelWaveform> {
    if s.num_channels() < 2 {
        return Err(Error::InvalidInput("beamforming needs a multichannel input".into()));
    }
    istft(&cgmm_mvdr(s, &cfg.cgmm)?.output)
}

/// Mono output of the enabled signal-processing stages. With both stages off
/// this is channel 0, untouched.
pub fn front_end(w: &MultichannelWaveform, cfg: &PipelineConfig, wpe_on: bool, bf_on: bool) -> Result<MultichannelWaveform> {
    if !wpe_on && !bf_on {
        return w.to_mono(0);
    }
    if bf_on && w.num_channels() < 2 {
        return Err(Error::InvalidInput("beamforming needs a multichannel input".into()));
    }
    let spec = stft(w, &cfg.stft)?;
    let spec = if wpe_on { wpe(&spec, &cfg.wpe)? } else { spec };
    if bf_on {
        beamform(&spec, cfg)
    } else {
        istft(&spec.channel(0)?)
    }
}

/// Outputs for (wpe, beamformer) = (off, off), (off, on), (on, off),
/// (on, on), sharing the dereverberated spectrogram.
pub fn front_end_variants(w: &MultichannelWaveform, cfg: &PipelineConfig) -> Result<[MultichannelWaveform; 4]> {
    let raw = w.to_mono(0)?;
    let spec = stft(w, &cfg.stft)?;
    let bf = beamform(&spec, cfg)?;
    let dry = wpe(&spec, &cfg.wpe)?;
    let dry0 = istft(&dry.channel(0)?)?;
    let dry_bf = beamform(&dry, cfg)?;
    Ok([raw, bf, dry0, dry_bf])
}

pub fn variant_index(t: Toggles) -> usize {
    2 * usize::from(t.wpe) + usize::from(t.beamformer)
}

/// Builds the network described by `net` with the speaker count stored in
/// the checkpoint, then loads the weights.
pub fn load_network(net: &MicroNetConfig, path: &Path) -> Result<MicroNet> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let tensors = parse_checkpoint(&bytes)?;
    let speakers = tensors
        .iter()
        .find(|(n, _, _)| n == "speaker.weight")
        .map(|(_, s, _)| s[0])
        .ok_or_else(|| Error::Malformed("checkpoint has no speaker classifier".into()))?;
    let mut m = MicroNet::new(MicroNetConfig { num_speakers: speakers, ..net.clone() })?;
    m.store.load_bytes(&bytes)?;
    Ok(m)
}

pub fn embed(w: &MultichannelWaveform, net: &MicroNet, fe: &Frontend) -> Result<Embedding> {
    extract_embedding(w, net, fe)
}

/// One utterance through the configured front end.
#[derive(Debug, Clone)]
pub struct Processed {
    pub output: MultichannelWaveform,
    /// Cosine score and decision when selection ran.
    pub selection: Option<(f64, Decision)>,
    /// Embedding of the kept version, when a network was supplied.
    pub embedding: Option<Embedding>,
}

/// Applies the enabled stages; with selection on, keeps the enhanced output
/// only when its embedding stays within `theta` of channel 0's.
pub fn process(w: &MultichannelWaveform, cfg: &PipelineConfig, toggles: Toggles, net: Option<&MicroNet>) -> Result<Processed> {
    let enhanced = front_end(w, cfg, toggles.wpe, toggles.beamformer)?;
    let Some(net) = net else {
        return Ok(Processed { output: enhanced, selection: None, embedding: None });
    };
    let e_enh = embed(&enhanced, net, &cfg.frontend)?;
    if !toggles.selection {
        return Ok(Processed { output: enhanced, selection: None, embedding: Some(e_enh) });
    }
    let raw = w.to_mono(0)?;
    let e_raw = embed(&raw, net, &cfg.frontend)?;
    Ok(choose(raw, enhanced, e_raw, e_enh, &cfg.selection)?)
}

/// Selection between an original and an enhanced version whose embeddings
/// are already known.
pub fn choose(
    raw: MultichannelWaveform,
    enhanced: MultichannelWaveform,
    e_raw: Embedding,
    e_enh: Embedding,
    policy: &SelectionPolicy,
) -> Result<Processed> {
    let (d, score) = select_enhanced(&e_raw, &e_enh, policy)?;
    let (output, embedding) = match d {
        Decision::KeepEnhanced => (enhanced, e_enh),
        Decision::KeepOriginal => (raw, e_raw),
    };
    Ok(Processed { output, selection: Some((score, d)), embedding: Some(embedding) })
}
