use std::fs;
use std::path::{Path, PathBuf};

use crate::audio::write_wav;
use crate::model::SampleRnn;
use crate::training::load_checkpoint;

use super::{diagnose, generate_batch, DiagnosticsReport, GenConfig, GenError, Result};

/// One generated clip and its diagnostics.
#[derive(Debug, Clone)]
pub struct ClipRecord {
    pub iteration: u64,
    pub seq: usize,
    pub path: PathBuf,
    pub report: DiagnosticsReport,
}

pub fn clip_file_name(iteration: u64, seq: usize) -> String {
    format!("ckpt{iteration}_seq{seq}.wav")
}

/// Generates `n_seq` clips from `model`, writes them to `out_dir` and diagnoses each.
pub fn generate_at_checkpoint(
    model: &SampleRnn<f32>,
    iteration: u64,
    out_dir: &Path,
    cfg: &GenConfig,
) -> Result<Vec<ClipRecord>> {
    fs::create_dir_all(out_dir).map_err(|source| GenError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let clips = generate_batch(model, cfg)?;
    let mut out = Vec::with_capacity(clips.len());
    for (seq, clip) in clips.iter().enumerate() {
        let name = clip_file_name(iteration, seq);
        let path = out_dir.join(&name);
        write_wav(clip, &path)?;
        let report = diagnose(&name, clip, cfg)?;
        out.push(ClipRecord {
            iteration,
            seq,
            path,
            report,
        });
    }
    Ok(out)
}

/// Generates clips for every readable checkpoint in `ckpt_dir`, in iteration order.
/// Files that fail to load are skipped with a warning.
pub fn checkpoint_generation_schedule(ckpt_dir: &Path, out_dir: &Path, cfg: &GenConfig) -> Result<Vec<ClipRecord>> {
    let io = |source| GenError::Io {
        path: ckpt_dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(ckpt_dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_none_or(|e| e != "tmp"))
        .collect();
    paths.sort();
    let mut models = Vec::new();
    for path in paths {
        match load_checkpoint(&path).and_then(|c| Ok((c.iteration, SampleRnn::from_params(c.model_config, c.params)?))) {
            Ok(m) => models.push(m),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if models.is_empty() {
        return Err(GenError::NoCheckpoints(ckpt_dir.to_path_buf()));
    }
    models.sort_by_key(|(it, _)| *it);
    let mut records = Vec::new();
    for (iteration, model) in &models {
        records.extend(generate_at_checkpoint(model, *iteration, out_dir, cfg)?);
    }
    Ok(records)
}
