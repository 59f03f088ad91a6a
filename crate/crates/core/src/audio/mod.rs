//! PCM audio I/O and corpus preparation.
//!
//! Ingest is 16-bit mono PCM WAV. A corpus is cut into fixed-length,
//! non-overlapping chunks whose provenance and train/test/validation
//! assignment are recorded in a [`ChunkManifest`].

mod corpus;
mod wav;

pub use corpus::{
    chunk_corpus, load_chunks, split_dataset, ChunkEntry, ChunkManifest, SplitRatios, SplitTag,
};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed wav: {0}")]
    Format(String),
    #[error("unsupported wav: {field} = {value}")]
    Unsupported { field: &'static str, value: u32 },
    #[error("sample rate mismatch in {path}: expected {expected} Hz, found {found} Hz")]
    RateMismatch {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("empty-corpus: no complete chunk could be cut from the input files")]
    EmptyCorpus,
    #[error("insufficient data: {0} chunks cannot populate train, test and validation")]
    InsufficientData(usize),
    #[error("invalid audio buffer: {0}")]
    InvalidBuffer(String),
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
}

pub type Result<T, E = AudioError> = std::result::Result<T, E>;

/// Mono time-domain signal with nominal amplitude range [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidBuffer("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::InvalidBuffer(format!(
                "sample {i} is not finite"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}
