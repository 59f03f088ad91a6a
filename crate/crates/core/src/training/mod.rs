//! Truncated-BPTT training with Adam, global-norm clipping, periodic
//! validation and binary checkpoints.

mod adam;
mod checkpoint;
mod trainer;

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use trainer::{
    segment_count, tbptt_step, train_loop, validate, BatchStream, LoopOptions, LoopSummary, MetricsLine,
    TrainData, Trainer,
};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::model::ModelError;
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint digest mismatch: stored {stored:016x}, computed {computed:016x}")]
    Digest { stored: u64, computed: u64 },
    #[error("training diverged at iteration {iteration} (non-finite loss); last checkpoint: {}", last_checkpoint.as_ref().map_or("none".to_string(), |p| p.display().to_string()))]
    Divergence {
        iteration: u64,
        last_checkpoint: Option<PathBuf>,
    },
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("training data: {0}")]
    Data(String),
    #[error("checkpoint hook failed: {0}")]
    Hook(String),
}

impl From<NumericsError> for TrainError {
    fn from(e: NumericsError) -> Self {
        TrainError::Model(ModelError::Numerics(e))
    }
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Predicted samples per backprop segment.
    pub tbptt_len: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    pub max_iterations: u64,
    pub checkpoint_every: u64,
    pub validate_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            tbptt_len: 512,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
            max_iterations: 80_000,
            checkpoint_every: 1000,
            validate_every: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Full-scale settings: batch 128, 512-sample segments, up to 80k iterations.
    pub fn full() -> Self {
        Self::default()
    }

    /// CPU settings paired with `ModelConfig::desk`: batch 8, 256-sample
    /// segments, learning rate 3e-3, 2000 iterations.
    pub fn desk() -> Self {
        Self {
            batch_size: 8,
            tbptt_len: 256,
            lr: 3e-3,
            max_iterations: 2000,
            checkpoint_every: 500,
            validate_every: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self, frame_size: usize) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.tbptt_len == 0 || self.tbptt_len % frame_size != 0 {
            return bad(format!(
                "tbptt_len {} must be a positive multiple of frame_size {frame_size}",
                self.tbptt_len
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) || !(self.clip_norm > 0.0) {
            return bad("eps and clip_norm must be positive".into());
        }
        if self.checkpoint_every == 0 || self.validate_every == 0 {
            return bad("checkpoint_every and validate_every must be >= 1".into());
        }
        Ok(())
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        [
            ("batch_size", self.batch_size.to_string()),
            ("tbptt_len", self.tbptt_len.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("beta1", format!("{:?}", self.beta1)),
            ("beta2", format!("{:?}", self.beta2)),
            ("eps", format!("{:?}", self.eps)),
            ("clip_norm", format!("{:?}", self.clip_norm)),
            ("max_iterations", self.max_iterations.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("validate_every", self.validate_every.to_string()),
            ("seed", self.seed.to_string()),
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
            "batch_size" => self.batch_size = p(key, value)?,
            "tbptt_len" => self.tbptt_len = p(key, value)?,
            "lr" => self.lr = p(key, value)?,
            "beta1" => self.beta1 = p(key, value)?,
            "beta2" => self.beta2 = p(key, value)?,
            "eps" => self.eps = p(key, value)?,
            "clip_norm" => self.clip_norm = p(key, value)?,
            "max_iterations" => self.max_iterations = p(key, value)?,
            "checkpoint_every" => self.checkpoint_every = p(key, value)?,
            "validate_every" => self.validate_every = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            _ => return Err(format!("unknown train key '{key}'")),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_checks() {
        let c = TrainConfig {
            batch_size: 8,
            lr: 3e-3,
            ..TrainConfig::default()
        };
        let mut back = TrainConfig::default();
        for (k, v) in c.to_kv() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, c);
        assert!(back.set("momentum", "0.9").is_err());
        assert!(c.validate(16).is_ok());
        assert!(TrainConfig { tbptt_len: 500, ..c.clone() }.validate(16).is_err());
        assert!(TrainConfig { batch_size: 0, ..c }.validate(16).is_err());
    }
}
