//! Two-tier SampleRNN.
//!
//! The frame tier is a stack of 1–9 recurrent layers (LSTM or GRU) that
//! advances once per frame of `frame_size` samples. Its output, optionally the
//! sum of every layer's hidden state (skip connections), is upsampled by
//! `frame_size` independent linear maps into one conditioning vector per
//! sample position of the next frame. The sample tier embeds the previous
//! `frame_size` codes, adds the conditioning vector and runs a two-hidden-layer
//! MLP emitting `q_levels` logits.
//!
//! ```text
//!   codes ──frame k──► dequantize ─► proj ─► [cell]×n_layers ─► Σ skip ─► upsample ─► cond[k+1, 0..fs]
//!   codes[p-fs..p] ─► embed ─► concat ─► linear ─+ cond ─► relu ─► linear ─► relu ─► logits[p]
//! ```

mod cells;
mod gradient_suite;
mod quantize;
mod sample_rnn;

pub use cells::{gru_cell, lstm_cell, upsample, GruWeights, LstmWeights};
pub use gradient_suite::{gradient_suite, LayerCheck, SuiteReport, SUITE_LAYERS};
pub use quantize::Quantizer;
pub use sample_rnn::{CodeBatch, ForwardNll, RecurrentState, Resolved, SampleRnn, StateNodes};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("code {code} out of range for {levels} quantization levels")]
    CodeOutOfRange { code: usize, levels: usize },
    #[error("framing error: sequence length {len} is not a multiple of frame size {frame_size}")]
    Framing { len: usize, frame_size: usize },
    #[error("sequence of {len} samples is too short; need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("state mismatch: {0}")]
    State(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        })
    }
}

impl FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            _ => Err(format!("unknown cell '{s}' (expected lstm or gru)")),
        }
    }
}

/// How the frame tier's initial state is obtained at the start of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum H0Mode {
    /// Trained parameters, zero at init.
    Learned,
    /// Drawn per sequence from N(0, 0.1²).
    Randomized,
}

impl fmt::Display for H0Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            H0Mode::Learned => "learned",
            H0Mode::Randomized => "randomized",
        })
    }
}

impl FromStr for H0Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "learned" => Ok(H0Mode::Learned),
            "randomized" | "random" => Ok(H0Mode::Randomized),
            _ => Err(format!("unknown h0 mode '{s}' (expected learned or randomized)")),
        }
    }
}

/// Standard deviation of randomized initial states.
pub const RANDOM_H0_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub q_levels: usize,
    pub embed_size: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub cell: CellKind,
    pub frame_size: usize,
    pub sample_rate: u32,
    pub h0_mode: H0Mode,
    pub skip_connections: bool,
    pub weight_norm: bool,
    pub forget_bias_init: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            q_levels: 256,
            embed_size: 256,
            hidden_dim: 1024,
            n_layers: 5,
            cell: CellKind::Lstm,
            frame_size: 16,
            sample_rate: 16_000,
            h0_mode: H0Mode::Learned,
            skip_connections: true,
            weight_norm: true,
            forget_bias_init: 3.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Full-scale configuration: 5-layer LSTM, 1024 units, randomized h0.
    pub fn full() -> Self {
        Self {
            h0_mode: H0Mode::Randomized,
            ..Self::default()
        }
    }

    /// Small configuration that trains on a CPU in minutes.
    pub fn desk() -> Self {
        Self {
            embed_size: 16,
            hidden_dim: 64,
            n_layers: 1,
            frame_size: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.q_levels < 2 {
            return bad(format!("q_levels must be >= 2, got {}", self.q_levels));
        }
        if self.frame_size < 2 {
            return bad(format!("frame_size must be >= 2, got {}", self.frame_size));
        }
        if !(1..=9).contains(&self.n_layers) {
            return bad(format!("n_layers must be in 1..=9, got {}", self.n_layers));
        }
        if self.embed_size == 0 || self.hidden_dim == 0 {
            return bad("embed_size and hidden_dim must be positive".into());
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if !self.forget_bias_init.is_finite() {
            return bad("forget_bias_init must be finite".into());
        }
        Ok(())
    }

    pub fn quantizer(&self) -> Result<Quantizer> {
        Quantizer::new(self.q_levels)
    }

    /// `key=value` lines, the textual form used in checkpoints and run logs.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        [
            ("q_levels", self.q_levels.to_string()),
            ("embed_size", self.embed_size.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("n_layers", self.n_layers.to_string()),
            ("cell", self.cell.to_string()),
            ("frame_size", self.frame_size.to_string()),
            ("sample_rate", self.sample_rate.to_string()),
            ("h0_mode", self.h0_mode.to_string()),
            ("skip_connections", self.skip_connections.to_string()),
            ("weight_norm", self.weight_norm.to_string()),
            ("forget_bias_init", format!("{:?}", self.forget_bias_init)),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Applies one `key=value` setting; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn p<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String>
        where
            T::Err: fmt::Display,
        {
            v.trim().parse().map_err(|e| format!("{key}: {e}"))
        }
        match key {
            "q_levels" => self.q_levels = p(key, value)?,
            "embed_size" => self.embed_size = p(key, value)?,
            "hidden_dim" => self.hidden_dim = p(key, value)?,
            "n_layers" => self.n_layers = p(key, value)?,
            "cell" => self.cell = p(key, value)?,
            "frame_size" => self.frame_size = p(key, value)?,
            "sample_rate" => self.sample_rate = p(key, value)?,
            "h0_mode" => self.h0_mode = p(key, value)?,
            "skip_connections" => self.skip_connections = p(key, value)?,
            "weight_norm" => self.weight_norm = p(key, value)?,
            "forget_bias_init" => self.forget_bias_init = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            _ => return Err(format!("unknown model key '{key}'")),
        }
        Ok(())
    }
}
