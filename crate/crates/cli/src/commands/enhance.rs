use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ffsv_core::audio::{read_wav, write_wav, Encoding};
use ffsv_core::eval::format_sig9;
use ffsv_core::par;

use super::{checkpoint_path, ensure_dir, write_text};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{parse_manifest, read_text};
use crate::pipeline::{load_network, process};

/// One log line per input: id, cosine score and decision, or the error.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceLog {
    pub id: String,
    pub result: Result<Option<(f64, &'static str)>, String>,
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "utt".into())
}

/// Inputs from the command line, or the manifest's files.
fn inputs(cfg: &PipelineConfig, given: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    if !given.is_empty() {
        return Ok(given.to_vec());
    }
    let manifest = cfg.required("manifest", &cfg.paths.manifest)?;
    Ok(parse_manifest(&read_text(manifest)?)?.iter().map(|e| cfg.resolve(&e.wav)).collect())
}

/// `enhance`: writes `enhanced/<id>.wav` (float32) and `enhance.log`.
pub fn run(cfg: &PipelineConfig, given: &[PathBuf]) -> CliResult<Vec<EnhanceLog>> {
    let files = inputs(cfg, given)?;
    let ids: Vec<String> = files.iter().map(|p| stem(p)).collect();
    if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
        return Err(CliError::Config("input file names must be unique".into()));
    }
    let net = if cfg.toggles.selection {
        let ckpt = checkpoint_path(cfg);
        Some(load_network(&cfg.net, &ckpt).map_err(|e| CliError::Config(format!("checkpoint {}: {e}", ckpt.display())))?)
    } else {
        None
    };
    let out = cfg.paths.out_dir.join("enhanced");
    ensure_dir(&out)?;
    let results = par::map_range(files.len(), |i| -> Result<Option<(f64, &'static str)>, String> {
        let w = read_wav(&files[i]).map_err(|e| e.to_string())?;
        let p = process(&w, cfg, cfg.toggles, net.as_ref()).map_err(|e| e.to_string())?;
        write_wav(&p.output, out.join(format!("{}.wav", ids[i])), Encoding::Float32).map_err(|e| e.to_string())?;
        Ok(p.selection.map(|(s, d)| (s, d.as_str())))
    });
    let logs: Vec<EnhanceLog> = ids.into_iter().zip(results).map(|(id, result)| EnhanceLog { id, result }).collect();
    let mut text = String::new();
    for l in &logs {
        match &l.result {
            Ok(Some((s, d))) => writeln!(text, "{}\t{}\t{d}", l.id, format_sig9(*s)),
            Ok(None) => writeln!(text, "{}\t-\tenhanced", l.id),
            Err(e) => {
                log::error!("{}: {e}", l.id);
                writeln!(text, "{}\t-\tfailed", l.id)
            }
        }
        .expect("write to string");
    }
    write_text(&cfg.paths.out_dir.join("enhance.log"), &text)?;
    let failed = logs.iter().filter(|l| l.result.is_err()).count();
    if failed > 0 {
        return Err(CliError::Partial(format!("{failed} of {} files failed", logs.len())));
    }
    Ok(logs)
}
