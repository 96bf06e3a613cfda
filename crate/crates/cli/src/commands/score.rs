use std::collections::{BTreeMap, BTreeSet};

use ffsv_core::audio::read_wav;
use ffsv_core::eval::{cosine_score, format_metrics, format_scores, parse_trials, Embedding, ScoreSet, Trial};
use ffsv_core::nn::MicroNet;
use ffsv_core::{par, Error};

use super::{checkpoint_path, enrollment_embedding, write_text};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{parse_utterance_map, read_text};
use crate::pipeline::{load_network, process};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub scores: ScoreSet,
    /// `(eer, min_dcf)` when every trial is labelled.
    pub metrics: Option<(f64, f64)>,
    /// Trials dropped because one side had no detectable speech.
    pub no_speech: usize,
    /// Trials dropped because a file could not be processed.
    pub failed: usize,
}

/// Embedding of one id, or why there is none.
#[derive(Debug, Clone)]
pub(crate) enum Outcome {
    Ok(Embedding),
    NoSpeech,
    Failed(String),
}

impl From<ffsv_core::Result<Embedding>> for Outcome {
    fn from(r: ffsv_core::Result<Embedding>) -> Self {
        match r {
            Ok(e) => Outcome::Ok(e),
            Err(Error::NoSpeech) => Outcome::NoSpeech,
            Err(e) => Outcome::Failed(e.to_string()),
        }
    }
}

fn outcome(r: ffsv_core::Result<Embedding>) -> Outcome {
    Outcome::from(r)
}

/// Scores trials given per-id embedding outcomes; trial order is kept.
pub(crate) fn score_trials(
    trials: &[Trial],
    enroll: &BTreeMap<String, Outcome>,
    test: &BTreeMap<String, Outcome>,
    cfg: &PipelineConfig,
) -> CliResult<ScoreReport> {
    let mut scores = ScoreSet::default();
    let (mut no_speech, mut failed) = (0, 0);
    for t in trials {
        match (&enroll[&t.enroll], &test[&t.test]) {
            (Outcome::Ok(a), Outcome::Ok(b)) => scores.push(t.clone(), cosine_score(a, b)?),
            (Outcome::Failed(_), _) | (_, Outcome::Failed(_)) => failed += 1,
            _ => {
                log::warn!("trial {} {}: no speech, excluded", t.enroll, t.test);
                no_speech += 1;
            }
        }
    }
    let metrics = if scores.has_labels() {
        let (s, l) = scores.labelled()?;
        if l.iter().any(|&x| x) && l.iter().any(|&x| !x) {
            Some((ffsv_core::eval::eer(&s, &l)?.0, ffsv_core::eval::min_dcf(&s, &l, &cfg.dcf)?.0))
        } else {
            log::warn!("labels cover a single class; metrics skipped");
            None
        }
    } else {
        None
    };
    Ok(ScoreReport { scores, metrics, no_speech, failed })
}

/// Scores a trial list: enrollment audio is embedded as recorded (channel
/// 0, several files averaged); test audio goes through the enabled front
/// end first.
pub fn score_with(
    cfg: &PipelineConfig,
    net: &MicroNet,
    map: &BTreeMap<String, Vec<String>>,
    trials: &[Trial],
) -> CliResult<ScoreReport> {
    let enroll_ids: BTreeSet<&str> = trials.iter().map(|t| t.enroll.as_str()).collect();
    let test_ids: BTreeSet<&str> = trials.iter().map(|t| t.test.as_str()).collect();
    for id in enroll_ids.iter().chain(&test_ids) {
        if !map.contains_key(*id) {
            return Err(CliError::Config(format!("utterance id {id} is not in the utterance map")));
        }
    }
    let enroll_ids: Vec<&str> = enroll_ids.into_iter().collect();
    let test_ids: Vec<&str> = test_ids.into_iter().collect();
    let enroll = par::map_slice(&enroll_ids, |id| {
        let waves = map[*id].iter().map(|p| read_wav(cfg.resolve(p))).collect::<ffsv_core::Result<Vec<_>>>();
        outcome(waves.and_then(|w| enrollment_embedding(&w, net, cfg)))
    });
    let test = par::map_slice(&test_ids, |id| {
        let r = read_wav(cfg.resolve(&map[*id][0])).and_then(|w| process(&w, cfg, cfg.toggles, Some(net)));
        outcome(r.map(|p| p.embedding.expect("network supplied")))
    });
    let mut e_map = BTreeMap::new();
    for (id, o) in enroll_ids.iter().zip(enroll) {
        if let Outcome::Failed(m) = &o {
            log::error!("{id}: {m}");
        }
        e_map.insert(id.to_string(), o);
    }
    let mut t_map = BTreeMap::new();
    for (id, o) in test_ids.iter().zip(test) {
        if let Outcome::Failed(m) = &o {
            log::error!("{id}: {m}");
        }
        t_map.insert(id.to_string(), o);
    }
    score_trials(trials, &e_map, &t_map, cfg)
}

pub fn report_text(r: &ScoreReport, cfg: &PipelineConfig) -> Option<String> {
    r.metrics.map(|(eer, dcf)| {
        format!(
            "{}\nexcluded_no_speech={} failed={}\n",
            format_metrics(eer, dcf, cfg.dcf.p_target),
            r.no_speech,
            r.failed
        )
    })
}

/// `score`: writes `scores.tsv` and, for labelled trials, `metrics.txt`.
pub fn run(cfg: &PipelineConfig) -> CliResult<ScoreReport> {
    let ckpt = checkpoint_path(cfg);
    let net = load_network(&cfg.net, &ckpt).map_err(|e| match e {
        Error::MissingFile(_) | Error::Malformed(_) | Error::ShapeMismatch(_) | Error::Truncated(_) => {
            CliError::Config(format!("checkpoint {}: {e}", ckpt.display()))
        }
        other => other.into(),
    })?;
    let map = parse_utterance_map(&read_text(cfg.required("utterances", &cfg.paths.utterances)?)?)?;
    let trials = parse_trials(&read_text(cfg.required("trials", &cfg.paths.trials)?)?)
        .map_err(|e| CliError::Config(format!("trial list: {e}")))?;
    let report = score_with(cfg, &net, &map, &trials)?;
    write_text(&cfg.paths.out_dir.join("scores.tsv"), &format_scores(&report.scores))?;
    if let Some(text) = report_text(&report, cfg) {
        write_text(&cfg.paths.out_dir.join("metrics.txt"), &text)?;
        log::info!("{}", text.lines().next().unwrap_or(""));
    }
    if report.no_speech > 0 {
        log::warn!("{} trials excluded for lack of speech", report.no_speech);
    }
    if report.failed > 0 {
        return Err(CliError::Partial(format!("{} trials failed", report.failed)));
    }
    Ok(report)
}
