//! Line-oriented `section.key = value` configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ffsv_core::beamform::{CgmmConfig, CgmmInit};
use ffsv_core::dsp::{StftConfig, Window};
use ffsv_core::eval::{DcfParams, SelectionPolicy};
use ffsv_core::nn::{BlockConfig, Frontend, MicroNetConfig, TrainConfig};
use ffsv_core::roomsim::RoomRanges;
use ffsv_core::wpe::WpeConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Paths {
    /// Base directory for relative paths found inside manifests and maps.
    pub data_root: Option<PathBuf>,
    /// `wav-path speaker-id [domain-id]` lines.
    pub manifest: Option<PathBuf>,
    /// `utterance-id wav-path` lines; an id may repeat.
    pub utterances: Option<PathBuf>,
    /// `enroll-id test-id [0|1]` lines.
    pub trials: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
}

/// Independent switches for each front-end and training stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Toggles {
    pub wpe: bool,
    pub beamformer: bool,
    pub selection: bool,
    pub dat: bool,
}

impl Toggles {
    /// All sixteen combinations, `wpe` varying slowest.
    pub fn grid() -> Vec<Toggles> {
        (0..16u8)
            .map(|i| Toggles {
                wpe: i & 8 != 0,
                beamformer: i & 4 != 0,
                dat: i & 2 != 0,
                selection: i & 1 != 0,
            })
            .collect()
    }
}

/// Room simulation and augmentation settings for `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub rooms: usize,
    pub snr_db: (f64, f64),
    pub speeds: Vec<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            rooms: 8,
            snr_db: (5.0, 20.0),
            speeds: vec![0.9, 1.0, 1.1],
        }
    }
}

/// Size and conditions of the synthetic development set used by `ablate`.
#[derive(Debug, Clone, PartialEq)]
pub struct DevsetConfig {
    pub train_speakers: usize,
    pub train_utterances: usize,
    pub eval_speakers: usize,
    pub enroll_utterances: usize,
    pub test_utterances: usize,
    /// Seconds per utterance.
    pub duration: f64,
    /// SNR of the far-field test recordings, per channel.
    pub snr_db: f64,
    pub sample_rate: u32,
}

impl Default for DevsetConfig {
    fn default() -> Self {
        Self {
            train_speakers: 16,
            train_utterances: 8,
            eval_speakers: 8,
            enroll_utterances: 2,
            test_utterances: 3,
            duration: 2.0,
            snr_db: 5.0,
            sample_rate: 16000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub thetas: Vec<f64>,
    pub rir_sets: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            thetas: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            rir_sets: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub toggles: Toggles,
    pub stft: StftConfig,
    pub wpe: WpeConfig,
    pub cgmm: CgmmConfig,
    pub frontend: Frontend,
    pub net: MicroNetConfig,
    pub train: TrainConfig,
    /// Epochs of the adversarial fine-tuning stage.
    pub dat_epochs: usize,
    pub selection: SelectionPolicy,
    pub dcf: DcfParams,
    pub rooms: RoomRanges,
    pub simulate: SimulateConfig,
    pub devset: DevsetConfig,
    pub tune: TuneConfig,
    pub seed: u64,
    /// Worker threads; 0 keeps the default pool.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut c = Self {
            paths: Paths {
                out_dir: PathBuf::from("out"),
                ..Paths::default()
            },
            toggles: Toggles::default(),
            stft: StftConfig::default(),
            wpe: WpeConfig::default(),
            cgmm: CgmmConfig::default(),
            frontend: Frontend::default(),
            net: MicroNetConfig {
                input_frames: 100,
                blocks: vec![
                    BlockConfig { mid: 4, out: 8, stride: 1, bam: true },
                    BlockConfig { mid: 8, out: 16, stride: 2, bam: true },
                ],
                embedding_dim: 32,
                ..MicroNetConfig::default()
            },
            train: TrainConfig {
                batch_size: 16,
                learning_rate: 0.05,
                decay: 0.5,
                decay_every: 10,
                epochs: 20,
                lambda: 0.1,
                domain_lr_scale: 4.0,
                domain_steps: 5,
                ..TrainConfig::default()
            },
            dat_epochs: 10,
            selection: SelectionPolicy::default(),
            dcf: DcfParams::default(),
            rooms: RoomRanges::default(),
            simulate: SimulateConfig::default(),
            devset: DevsetConfig::default(),
            tune: TuneConfig::default(),
            seed: 0,
            workers: 0,
        };
        c.apply_seed(0);
        c
    }
}

fn bad(line: usize, key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("line {line}: {key}: {msg}"))
}

fn scalar<T: FromStr>(line: usize, key: &str, v: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| bad(line, key, format!("{e} ({v:?})")))
}

fn boolean(line: usize, key: &str, v: &str) -> CliResult<bool> {
    match v {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(bad(line, key, format!("expected on/off, got {v:?}"))),
    }
}

fn list<T: FromStr>(line: usize, key: &str, v: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',').map(|p| scalar(line, key, p.trim())).collect()
}

fn range(line: usize, key: &str, v: &str) -> CliResult<(f64, f64)> {
    match list::<f64>(line, key, v)?.as_slice() {
        [a] => Ok((*a, *a)),
        [a, b] => Ok((*a, *b)),
        _ => Err(bad(line, key, "expected `low, high` or a single value")),
    }
}

/// `mid:out:stride` per block, comma separated.
fn blocks(line: usize, key: &str, v: &str, bam: bool) -> CliResult<Vec<BlockConfig>> {
    v.split(',')
        .map(|b| {
            let f: Vec<usize> = b
                .trim()
                .split(':')
                .map(|x| scalar(line, key, x))
                .collect::<CliResult<_>>()?;
            match f.as_slice() {
                [mid, out, stride] => Ok(BlockConfig { mid: *mid, out: *out, stride: *stride, bam }),
                _ => Err(bad(line, key, "blocks are `mid:out:stride`")),
            }
        })
        .collect()
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses config text on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {n}: expected `section.key = value`")))?;
            let k = k.trim();
            if !k.contains('.') {
                return Err(CliError::Config(format!("line {n}: key {k:?} has no section")));
            }
            if entries.insert(k.to_string(), (n, v.trim().to_string())).is_some() {
                return Err(CliError::Config(format!("line {n}: {k} set twice")));
            }
        }
        let mut c = Self::default();
        let mut bam = true;
        let mut block_spec = None;
        for (key, (n, v)) in &entries {
            let (n, v) = (*n, v.as_str());
            let k = key.as_str();
            match k {
                "paths.data_root" => c.paths.data_root = Some(v.into()),
                "paths.manifest" => c.paths.manifest = Some(v.into()),
                "paths.utterances" => c.paths.utterances = Some(v.into()),
                "paths.trials" => c.paths.trials = Some(v.into()),
                "paths.checkpoint" => c.paths.checkpoint = Some(v.into()),
                "paths.out_dir" => c.paths.out_dir = v.into(),
                "pipeline.wpe" => c.toggles.wpe = boolean(n, k, v)?,
                "pipeline.beamformer" => c.toggles.beamformer = boolean(n, k, v)?,
                "pipeline.selection" => c.toggles.selection = boolean(n, k, v)?,
                "pipeline.dat" => c.toggles.dat = boolean(n, k, v)?,
                "run.seed" => c.seed = scalar(n, k, v)?,
                "run.workers" => c.workers = scalar(n, k, v)?,
                "stft.window_length" => c.stft.window_length = scalar(n, k, v)?,
                "stft.hop_length" => c.stft.hop_length = scalar(n, k, v)?,
                "stft.fft_size" => c.stft.fft_size = scalar(n, k, v)?,
                "stft.window" => {
                    c.stft.window = match v {
                        "hann" => Window::Hann,
                        "hamming" => Window::Hamming,
                        _ => return Err(bad(n, k, "expected hann or hamming")),
                    }
                }
                "wpe.taps" => c.wpe.taps = scalar(n, k, v)?,
                "wpe.delay" => c.wpe.delay = scalar(n, k, v)?,
                "wpe.iterations" => c.wpe.iterations = scalar(n, k, v)?,
                "wpe.variance_floor" => c.wpe.variance_floor = scalar(n, k, v)?,
                "cgmm.iterations" => c.cgmm.iterations = scalar(n, k, v)?,
                "cgmm.regularization" => c.cgmm.regularization = scalar(n, k, v)?,
                "cgmm.init" => {
                    c.cgmm.init = match v {
                        "power_split" => CgmmInit::PowerSplit,
                        "random" => CgmmInit::RandomResponsibility,
                        _ => return Err(bad(n, k, "expected power_split or random")),
                    }
                }
                "features.frame_ms" => {
                    c.frontend.mfcc.frame_ms = scalar(n, k, v)?;
                    c.frontend.vad.frame_ms = c.frontend.mfcc.frame_ms;
                }
                "features.hop_ms" => {
                    c.frontend.mfcc.hop_ms = scalar(n, k, v)?;
                    c.frontend.vad.hop_ms = c.frontend.mfcc.hop_ms;
                }
                "features.preemphasis" => c.frontend.mfcc.preemphasis = scalar(n, k, v)?,
                "features.mean_normalize" => c.frontend.mean_normalize = boolean(n, k, v)?,
                "features.vad_offset" => c.frontend.vad.offset = scalar(n, k, v)?,
                "net.input_frames" => c.net.input_frames = scalar(n, k, v)?,
                "net.stem_channels" => c.net.stem_channels = scalar(n, k, v)?,
                "net.blocks" => block_spec = Some((n, v)),
                "net.bam" => bam = boolean(n, k, v)?,
                "net.bam_reduction" => c.net.bam_reduction = scalar(n, k, v)?,
                "net.embedding_dim" => c.net.embedding_dim = scalar(n, k, v)?,
                "net.domain_hidden" => c.net.domain_hidden = scalar(n, k, v)?,
                "train.batch_size" => c.train.batch_size = scalar(n, k, v)?,
                "train.learning_rate" => c.train.learning_rate = scalar(n, k, v)?,
                "train.decay" => c.train.decay = scalar(n, k, v)?,
                "train.decay_every" => c.train.decay_every = scalar(n, k, v)?,
                "train.epochs" => c.train.epochs = scalar(n, k, v)?,
                "train.dat_epochs" => c.dat_epochs = scalar(n, k, v)?,
                "train.lambda" => c.train.lambda = scalar(n, k, v)?,
                "train.domain_lr_scale" => c.train.domain_lr_scale = scalar(n, k, v)?,
                "train.domain_steps" => c.train.domain_steps = scalar(n, k, v)?,
                "selection.theta" => c.selection.theta = scalar(n, k, v)?,
                "dcf.p_target" => c.dcf.p_target = scalar(n, k, v)?,
                "dcf.c_miss" => c.dcf.c_miss = scalar(n, k, v)?,
                "dcf.c_fa" => c.dcf.c_fa = scalar(n, k, v)?,
                "room.length" => c.rooms.length = range(n, k, v)?,
                "room.width" => c.rooms.width = range(n, k, v)?,
                "room.height" => c.rooms.height = range(n, k, v)?,
                "room.reflection" => c.rooms.reflection = range(n, k, v)?,
                "room.source_distance" => c.rooms.source_distance = range(n, k, v)?,
                "room.array_radius" => c.rooms.array_radius = scalar(n, k, v)?,
                "room.num_mics" => c.rooms.num_mics = scalar(n, k, v)?,
                "room.max_order" => c.rooms.max_order = scalar(n, k, v)?,
                "room.max_duration" => c.rooms.max_duration = Some(scalar(n, k, v)?),
                "simulate.rooms" => c.simulate.rooms = scalar(n, k, v)?,
                "simulate.snr_db" => c.simulate.snr_db = range(n, k, v)?,
                "simulate.speeds" => c.simulate.speeds = list(n, k, v)?,
                "devset.train_speakers" => c.devset.train_speakers = scalar(n, k, v)?,
                "devset.train_utterances" => c.devset.train_utterances = scalar(n, k, v)?,
                "devset.eval_speakers" => c.devset.eval_speakers = scalar(n, k, v)?,
                "devset.enroll_utterances" => c.devset.enroll_utterances = scalar(n, k, v)?,
                "devset.test_utterances" => c.devset.test_utterances = scalar(n, k, v)?,
                "devset.duration" => c.devset.duration = scalar(n, k, v)?,
                "devset.snr_db" => c.devset.snr_db = scalar(n, k, v)?,
                "devset.sample_rate" => c.devset.sample_rate = scalar(n, k, v)?,
                "tune.thetas" => c.tune.thetas = list(n, k, v)?,
                "tune.rir_sets" => c.tune.rir_sets = scalar(n, k, v)?,
                _ => return Err(CliError::Config(format!("line {n}: unknown key {k:?}"))),
            }
        }
        match block_spec {
            Some((n, v)) => c.net.blocks = blocks(n, "net.blocks", v, bam)?,
            None => c.net.blocks.iter_mut().for_each(|b| b.bam = bam),
        }
        c.apply_seed(c.seed);
        c.validate()?;
        Ok(c)
    }

    /// Sets the master seed and every seed derived from it.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.net.seed = seed;
        self.train.seed = seed.wrapping_add(1);
        self.cgmm.seed = seed.wrapping_add(2);
    }

    pub fn validate(&self) -> CliResult<()> {
        let core = |r: ffsv_core::Result<()>| r.map_err(|e| CliError::Config(e.to_string()));
        core(self.stft.validate())?;
        core(self.wpe.validate())?;
        core(self.cgmm.validate())?;
        core(self.net.validate())?;
        core(self.train.validate())?;
        core(self.dcf.validate())?;
        if !self.selection.theta.is_finite() {
            return Err(CliError::Config("selection.theta must be finite".into()));
        }
        if self.tune.thetas.is_empty() || self.tune.rir_sets == 0 {
            return Err(CliError::Config("tune grid is empty".into()));
        }
        if self.simulate.speeds.iter().any(|s| !(*s > 0.0)) {
            return Err(CliError::Config("speed factors must be positive".into()));
        }
        let d = &self.devset;
        if d.train_speakers < 2 || d.eval_speakers < 2 || d.train_utterances == 0 {
            return Err(CliError::Config("devset needs at least two speakers on each side".into()));
        }
        if d.enroll_utterances == 0 || d.test_utterances == 0 || !(d.duration > 0.0) || d.sample_rate == 0 {
            return Err(CliError::Config("devset sizes and duration must be positive".into()));
        }
        Ok(())
    }

    /// Resolves a path from a manifest or map against `paths.data_root`.
    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        match &self.paths.data_root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn required<'a>(&self, what: &str, p: &'a Option<PathBuf>) -> CliResult<&'a Path> {
        p.as_deref()
            .ok_or_else(|| CliError::Config(format!("paths.{what} is required for this command")))
    }
}
