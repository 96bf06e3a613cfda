pub mod ablate;
pub mod enhance;
pub mod score;
pub mod simulate;
pub mod train;
pub mod tune;

use std::path::{Path, PathBuf};

use ffsv_core::audio::MultichannelWaveform;
use ffsv_core::eval::Embedding;
use ffsv_core::nn::MicroNet;
use ffsv_core::{Error, Result};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::embed;

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// The checkpoint named in the config, or `model.ckpt` in the output
/// directory.
pub fn checkpoint_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.paths
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.paths.out_dir.join("model.ckpt"))
}

/// Channel 0 of every file, embedded and averaged.
pub fn enrollment_embedding(waves: &[MultichannelWaveform], net: &MicroNet, cfg: &PipelineConfig) -> Result<Embedding> {
    if waves.is_empty() {
        return Err(Error::InvalidInput("enrollment without audio".into()));
    }
    let list = waves
        .iter()
        .map(|w| embed(&w.to_mono(0)?, net, &cfg.frontend))
        .collect::<Result<Vec<_>>>()?;
    ffsv_core::eval::average_embeddings(&list)
}
