use std::collections::BTreeMap;
use std::fmt::Write as _;

use ffsv_core::audio::read_wav;
use ffsv_core::nn::{prepare_features, train, MicroNet, MicroNetConfig, Stage, TrainExample};
use ffsv_core::{par, Error};

use super::{checkpoint_path, write_text};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{index_labels, parse_manifest, read_text, ManifestEntry};

/// Feature sequences with dense speaker and domain indices.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub examples: Vec<TrainExample>,
    pub speakers: BTreeMap<String, usize>,
    pub domains: BTreeMap<String, usize>,
    /// Files without detectable speech, skipped.
    pub skipped: Vec<String>,
}

/// Reads and featurizes every manifest entry (channel 0). Domain labels are
/// required when `need_domains` is set.
pub fn load_training_set(cfg: &PipelineConfig, entries: &[ManifestEntry], need_domains: bool) -> CliResult<TrainingSet> {
    if need_domains {
        if let Some(e) = entries.iter().find(|e| e.domain.is_none()) {
            return Err(CliError::Config(format!("adversarial training needs a domain id for {}", e.wav)));
        }
        let domains = index_labels(entries.iter().filter_map(|e| e.domain.as_deref()));
        if domains.len() < 2 {
            return Err(CliError::Config("adversarial training needs at least two domain ids".into()));
        }
    }
    let speakers = index_labels(entries.iter().map(|e| e.speaker.as_str()));
    if speakers.len() < 2 {
        return Err(CliError::Config("training needs at least two speakers".into()));
    }
    let domains = index_labels(entries.iter().filter_map(|e| e.domain.as_deref()));
    let feats = par::map_slice(entries, |e| {
        let w = read_wav(cfg.resolve(&e.wav))?;
        prepare_features(&w.to_mono(0)?, &cfg.frontend)
    });
    let mut examples = Vec::with_capacity(entries.len());
    let mut skipped = Vec::new();
    for (e, f) in entries.iter().zip(feats) {
        match f {
            Ok(f) => {
                let domain = if need_domains { e.domain.as_ref().map(|d| domains[d]) } else { None };
                examples.push(TrainExample::from_features(&f, speakers[&e.speaker], domain));
            }
            Err(Error::NoSpeech) => {
                log::warn!("{}: no speech, skipped", e.wav);
                skipped.push(e.wav.clone());
            }
            Err(err) => return Err(CliError::Failed(format!("{}: {err}", e.wav))),
        }
    }
    Ok(TrainingSet { examples, speakers, domains, skipped })
}

/// Mean loss per epoch, labelled by stage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossHistory(pub Vec<(&'static str, usize, f64)>);

impl LossHistory {
    pub fn to_text(&self) -> String {
        let mut s = String::from("stage\tepoch\tloss\n");
        for (stage, epoch, loss) in &self.0 {
            writeln!(s, "{stage}\t{epoch}\t{}", ffsv_core::eval::format_sig9(*loss)).expect("write to string");
        }
        s
    }
}

pub fn speaker_stage(cfg: &PipelineConfig, set: &TrainingSet) -> CliResult<(MicroNet, LossHistory)> {
    let mut net = MicroNet::new(MicroNetConfig { num_speakers: set.speakers.len(), ..cfg.net.clone() })?;
    let h = train(&mut net, &set.examples, &cfg.train, Stage::SpeakerOnly)?;
    let hist = h.epoch_losses.iter().enumerate().map(|(i, l)| ("speaker", i, *l)).collect();
    Ok((net, LossHistory(hist)))
}

/// Adversarial fine-tuning of a stage-one network.
pub fn adversarial_stage(cfg: &PipelineConfig, set: &TrainingSet, net: &mut MicroNet, hist: &mut LossHistory) -> CliResult<()> {
    let tc = ffsv_core::nn::TrainConfig { epochs: cfg.dat_epochs, seed: cfg.train.seed.wrapping_add(1), ..cfg.train.clone() };
    let h = train(net, &set.examples, &tc, Stage::Adversarial)?;
    hist.0.extend(h.epoch_losses.iter().enumerate().map(|(i, l)| ("adversarial", i, *l)));
    Ok(())
}

/// The stored network is rounded to float32, exactly as a reload sees it.
pub fn save(net: &mut MicroNet, path: &std::path::Path) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        super::ensure_dir(dir)?;
    }
    net.store.write(path)?;
    net.store.quantize_f32();
    Ok(())
}

/// `train`: stage one, then the adversarial stage when `pipeline.dat` is on.
pub fn run(cfg: &PipelineConfig) -> CliResult<()> {
    let manifest = cfg.required("manifest", &cfg.paths.manifest)?;
    let entries = parse_manifest(&read_text(manifest)?)?;
    let set = load_training_set(cfg, &entries, cfg.toggles.dat)?;
    log::info!(
        "training on {} utterances, {} speakers, {} skipped",
        set.examples.len(),
        set.speakers.len(),
        set.skipped.len()
    );
    let (mut net, mut hist) = speaker_stage(cfg, &set)?;
    if cfg.toggles.dat {
        adversarial_stage(cfg, &set, &mut net, &mut hist)?;
    }
    let ckpt = checkpoint_path(cfg);
    save(&mut net, &ckpt)?;
    write_text(&cfg.paths.out_dir.join("loss_history.tsv"), &hist.to_text())?;
    log::info!("checkpoint written to {}", ckpt.display());
    Ok(())
}
