use std::collections::BTreeMap;
use std::fmt::Write as _;

use ffsv_core::eval::Embedding;
use ffsv_core::nn::MicroNet;
use ffsv_core::par;

use super::score::{score_trials, Outcome};
use super::train::{adversarial_stage, load_training_set, save, speaker_stage};
use super::{enrollment_embedding, write_text};
use crate::config::{PipelineConfig, Toggles};
use crate::devset::{generate, load, Devset};
use crate::error::{CliError, CliResult};
use crate::pipeline::{embed, front_end_variants, variant_index};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub toggles: Toggles,
    /// `(eer, min_dcf)`, or the reason the cell failed.
    pub result: Result<(f64, f64), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

fn mark(on: bool) -> &'static str {
    if on {
        "on"
    } else {
        "off"
    }
}

impl AblationTable {
    pub fn row(&self, t: Toggles) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.toggles == t)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<5} {:<10} {:<5} {:<9} {:>9} {:>8}\n", "wpe", "beamformer", "dat", "selection", "EER(%)", "minDCF");
        for r in &self.rows {
            let t = r.toggles;
            let (eer, dcf) = match &r.result {
                Ok((e, d)) => (format!("{:.4}", e * 100.0), format!("{d:.4}")),
                Err(_) => ("failed".to_string(), "failed".to_string()),
            };
            writeln!(
                s,
                "{:<5} {:<10} {:<5} {:<9} {:>9} {:>8}",
                mark(t.wpe),
                mark(t.beamformer),
                mark(t.dat),
                mark(t.selection),
                eer,
                dcf
            )
            .expect("write to string");
        }
        s
    }
}

fn outcome(r: ffsv_core::Result<Embedding>) -> Outcome {
    Outcome::from(r)
}

/// Everything `ablate` produces besides the table.
#[derive(Debug, Clone)]
pub struct AblationRun {
    pub table: AblationTable,
    pub devset: Devset,
    pub checkpoint_off: std::path::PathBuf,
    pub checkpoint_on: std::path::PathBuf,
}

/// `ablate`: generates the synthetic devset under `<out>/devset`, trains a
/// speaker-only and an adversarially fine-tuned network, and scores every
/// combination of the four toggles. Front-end stages apply to test audio;
/// selection compares each enhanced test embedding with that of raw channel
/// 0.
pub fn run(cfg: &PipelineConfig) -> CliResult<AblationRun> {
    let out = &cfg.paths.out_dir;
    let root = out.join("devset");
    let devset = generate(cfg, &root)?;
    log::info!("devset: {} training files, {} trials", devset.train.len(), devset.trial_list.len());
    let mut dcfg = cfg.clone();
    dcfg.paths.data_root = Some(root.clone());

    let set = load_training_set(&dcfg, &devset.train, true)?;
    let (mut off, hist_off) = speaker_stage(&dcfg, &set)?;
    let mut on = off.clone();
    let mut hist_on = hist_off.clone();
    adversarial_stage(&dcfg, &set, &mut on, &mut hist_on)?;
    let ckpt_off = out.join("dat_off.ckpt");
    let ckpt_on = out.join("dat_on.ckpt");
    save(&mut off, &ckpt_off)?;
    save(&mut on, &ckpt_on)?;
    write_text(&out.join("loss_history_dat_off.tsv"), &hist_off.to_text())?;
    write_text(&out.join("loss_history_dat_on.tsv"), &hist_on.to_text())?;
    log::info!("networks trained");

    let nets: [&MicroNet; 2] = [&off, &on];
    let enroll_ids: Vec<&String> = devset.enroll.keys().collect();
    let enroll: Vec<[Outcome; 2]> = par::map_slice(&enroll_ids, |id| {
        let waves = devset.enroll[*id].iter().map(|p| load(&root, p)).collect::<ffsv_core::Result<Vec<_>>>();
        nets.map(|n| outcome(waves.as_ref().map_err(clone_err).and_then(|w| enrollment_embedding(w, n, &dcfg))))
    });
    // [net][variant] per test utterance
    let tests: Vec<[[Outcome; 4]; 2]> = par::map_slice(&devset.tests, |(_, rel)| {
        let variants = load(&root, rel).and_then(|w| front_end_variants(&w, &dcfg));
        nets.map(|n| match &variants {
            Ok(v) => std::array::from_fn(|k| outcome(embed(&v[k], n, &dcfg.frontend))),
            Err(e) => std::array::from_fn(|_| Outcome::Failed(e.to_string())),
        })
    });
    log::info!("front-end variants embedded");

    let mut rows = Vec::with_capacity(16);
    for t in Toggles::grid() {
        let m = usize::from(t.dat);
        let v = variant_index(t);
        let e_map: BTreeMap<String, Outcome> =
            enroll_ids.iter().zip(&enroll).map(|(id, o)| ((*id).clone(), o[m].clone())).collect();
        let mut t_map = BTreeMap::new();
        for ((id, _), o) in devset.tests.iter().zip(&tests) {
            let chosen = if t.selection {
                select(&o[m][0], &o[m][v], &dcfg)
            } else {
                o[m][v].clone()
            };
            t_map.insert(id.clone(), chosen);
        }
        let result = score_trials(&devset.trial_list, &e_map, &t_map, &dcfg)
            .map_err(|e| e.to_string())
            .and_then(|r| {
                if r.failed > 0 {
                    Err(format!("{} trials failed", r.failed))
                } else {
                    r.metrics.ok_or_else(|| "no labelled trials left".to_string())
                }
            });
        rows.push(AblationRow { toggles: t, result });
    }
    let table = AblationTable { rows };
    write_text(&out.join("ablation.txt"), &table.to_text())?;
    let failed = table.rows.iter().filter(|r| r.result.is_err()).count();
    if failed > 0 {
        return Err(CliError::Partial(format!("{failed} ablation cells failed; table written")));
    }
    Ok(AblationRun { table, devset, checkpoint_off: ckpt_off, checkpoint_on: ckpt_on })
}

fn clone_err(e: &ffsv_core::Error) -> ffsv_core::Error {
    ffsv_core::Error::InvalidInput(e.to_string())
}

/// Selection on precomputed embeddings: the enhanced one is kept when its
/// cosine to the raw one reaches the threshold.
fn select(raw: &Outcome, enhanced: &Outcome, cfg: &PipelineConfig) -> Outcome {
    match (raw, enhanced) {
        (Outcome::Ok(r), Outcome::Ok(e)) => match ffsv_core::eval::select_enhanced(r, e, &cfg.selection) {
            Ok((ffsv_core::eval::Decision::KeepEnhanced, _)) => enhanced.clone(),
            Ok((ffsv_core::eval::Decision::KeepOriginal, _)) => raw.clone(),
            Err(err) => Outcome::Failed(err.to_string()),
        },
        (Outcome::Ok(_), other) => other.clone(),
        (other, _) => other.clone(),
    }
}
