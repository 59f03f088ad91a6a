//! Batched autoregressive generation, checkpoint clip schedules and clip diagnostics.

mod diagnostics;
mod generate;
mod sampler;
mod schedule;

pub use diagnostics::{
    detect_loop_trap, diagnose, spectral_flatness, DiagnosticsReport, ENVELOPE_HOP, ENVELOPE_WINDOW, FLATNESS_WINDOW,
};
pub use generate::{generate_batch, generate_codes, memory_estimate_bytes, sequence_seeds};
pub use sampler::sample_categorical;
pub use schedule::{checkpoint_generation_schedule, clip_file_name, generate_at_checkpoint, ClipRecord};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::audio::AudioError;
use crate::model::ModelError;
use crate::numerics::NumericsError;
use crate::training::TrainError;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Checkpoint(#[from] TrainError),
    #[error("non-finite logits at step {step}")]
    NonFinite { step: usize },
    #[error(
        "generating {n_seq} sequences needs about {needed_mib} MiB, over the {budget_mib} MiB budget; reduce n_seq"
    )]
    MemoryBudget {
        n_seq: usize,
        needed_mib: u64,
        budget_mib: u64,
    },
    #[error("clip of {len} samples is too short: {what} needs at least {min}")]
    TooShort {
        len: usize,
        min: usize,
        what: &'static str,
    },
    #[error("lag window [{min_lag}, {max_lag}] s is invalid for a {duration} s clip (max_lag must stay below half)")]
    LagWindow { min_lag: f64, max_lag: f64, duration: f64 },
    #[error("no readable checkpoint in {0}")]
    NoCheckpoints(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<NumericsError> for GenError {
    fn from(e: NumericsError) -> Self {
        GenError::Model(ModelError::Numerics(e))
    }
}

pub type Result<T, E = GenError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Draw from the tempered softmax.
    Softmax,
    /// Most probable code, first index on ties.
    Argmax,
}

impl fmt::Display for SampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMode::Softmax => "softmax_sample",
            SampleMode::Argmax => "argmax",
        })
    }
}

impl FromStr for SampleMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "softmax_sample" | "softmax" | "sample" => Ok(SampleMode::Softmax),
            "argmax" => Ok(SampleMode::Argmax),
            _ => Err(format!("unknown sampling mode '{s}' (expected softmax_sample or argmax)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n_seq: usize,
    pub clip_seconds: f64,
    pub temperature: f64,
    pub mode: SampleMode,
    /// Sequence `k` uses seed `seed + k`.
    pub seed: u64,
    pub memory_budget_mib: u64,
    pub flatness_threshold: f64,
    pub trap_threshold: f64,
    pub min_lag_s: f64,
    pub max_lag_s: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_seq: 10,
            clip_seconds: 30.0,
            temperature: 1.0,
            mode: SampleMode::Softmax,
            seed: 0,
            memory_budget_mib: 4096,
            flatness_threshold: 0.5,
            trap_threshold: 0.8,
            min_lag_s: 0.25,
            max_lag_s: 8.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GenError::Config(m));
        if self.n_seq == 0 {
            return bad("n_seq must be >= 1".into());
        }
        if !(self.clip_seconds > 0.0 && self.clip_seconds.is_finite()) {
            return bad(format!("clip_seconds must be positive, got {}", self.clip_seconds));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.min_lag_s > 0.0 && self.min_lag_s < self.max_lag_s) {
            return bad("need 0 < min_lag_s < max_lag_s".into());
        }
        Ok(())
    }

    pub fn clip_samples(&self, sample_rate: u32) -> usize {
        (self.clip_seconds * sample_rate as f64).round() as usize
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        [
            ("n_seq", self.n_seq.to_string()),
            ("clip_seconds", format!("{:?}", self.clip_seconds)),
            ("temperature", format!("{:?}", self.temperature)),
            ("mode", self.mode.to_string()),
            ("seed", self.seed.to_string()),
            ("memory_budget_mib", self.memory_budget_mib.to_string()),
            ("flatness_threshold", format!("{:?}", self.flatness_threshold)),
            ("trap_threshold", format!("{:?}", self.trap_threshold)),
            ("min_lag_s", format!("{:?}", self.min_lag_s)),
            ("max_lag_s", format!("{:?}", self.max_lag_s)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn p<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String>
        where
            T::Err: fmt::Display,
        {
            v.trim().parse().map_err(|e| format!("{key}: {e}"))
        }
        match key {
            "n_seq" => self.n_seq = p(key, value)?,
            "clip_seconds" => self.clip_seconds = p(key, value)?,
            "temperature" => self.temperature = p(key, value)?,
            "mode" => self.mode = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "memory_budget_mib" => self.memory_budget_mib = p(key, value)?,
            "flatness_threshold" => self.flatness_threshold = p(key, value)?,
            "trap_threshold" => self.trap_threshold = p(key, value)?,
            "min_lag_s" => self.min_lag_s = p(key, value)?,
            "max_lag_s" => self.max_lag_s = p(key, value)?,
            _ => return Err(format!("unknown gen key '{key}'")),
        }
        Ok(())
    }
}
