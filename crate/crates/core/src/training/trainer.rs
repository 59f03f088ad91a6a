use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioBuffer;
use crate::model::{CodeBatch, ModelError, Quantizer, RecurrentState, SampleRnn};
use crate::numerics::{Graph, NumericsError};

use super::{clip_grad_norm, save_checkpoint, Adam, Checkpoint, Result, TrainConfig, TrainError};

/// Quantized training and validation chunks, all of one length.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: Vec<Vec<usize>>,
    pub val: Vec<Vec<usize>>,
    chunk_len: usize,
}

impl TrainData {
    pub fn new(train: Vec<Vec<usize>>, val: Vec<Vec<usize>>) -> Result<Self> {
        let chunk_len = train.first().ok_or(TrainError::EmptySplit("train"))?.len();
        if train.iter().chain(&val).any(|c| c.len() != chunk_len) {
            return Err(TrainError::Data("chunks differ in length".into()));
        }
        Ok(Self { train, val, chunk_len })
    }

    pub fn from_buffers(train: &[AudioBuffer], val: &[AudioBuffer], q: Quantizer) -> Result<Self> {
        let codes = |b: &[AudioBuffer]| b.iter().map(|a| q.quantize_all(a.samples())).collect();
        Self::new(codes(train), codes(val))
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn corpus_samples(&self) -> usize {
        self.train.len() * self.chunk_len
    }
}

/// Number of backprop segments per chunk. Segment `k` spans
/// `[k·tbptt_len, k·tbptt_len + tbptt_len + frame_size)`, so consecutive
/// segments share one frame: the last frame of one is the first input of the next.
pub fn segment_count(chunk_len: usize, tbptt_len: usize, frame_size: usize) -> usize {
    chunk_len.saturating_sub(frame_size) / tbptt_len
}

fn segment(chunks: &[Vec<usize>], rows: &[usize], start: usize, len: usize) -> Result<CodeBatch> {
    let data: Vec<Vec<usize>> = rows.iter().map(|&r| chunks[r][start..start + len].to_vec()).collect();
    Ok(CodeBatch::from_rows(&data)?)
}

/// Epoch-wise permutations of chunk indices, consumed as one endless stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchStream {
    seed: u64,
    n_chunks: usize,
    epoch: u64,
    pos: usize,
}

impl BatchStream {
    pub fn new(seed: u64, n_chunks: usize) -> Result<Self> {
        Self::from_parts(seed, n_chunks, 0, 0)
    }

    pub fn from_parts(seed: u64, n_chunks: usize, epoch: u64, pos: usize) -> Result<Self> {
        if n_chunks == 0 {
            return Err(TrainError::EmptySplit("train"));
        }
        if pos > n_chunks {
            return Err(TrainError::Format(format!("stream position {pos} beyond {n_chunks} chunks")));
        }
        Ok(Self {
            seed,
            n_chunks,
            epoch,
            pos,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_chunks(&self) -> usize {
        self.n_chunks
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    fn permutation(&self) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut order: Vec<usize> = (0..self.n_chunks).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Next `size` chunk indices; each epoch visits every chunk once.
    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        let mut perm = self.permutation();
        while out.len() < size {
            if self.pos == self.n_chunks {
                self.epoch += 1;
                self.pos = 0;
                perm = self.permutation();
            }
            out.push(perm[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn divergence(e: ModelError, iteration: u64) -> TrainError {
    match e {
        ModelError::Numerics(NumericsError::NonFinite(_)) => TrainError::Divergence {
            iteration,
            last_checkpoint: None,
        },
        e => e.into(),
    }
}

/// One truncated-BPTT update on `batch`, starting from `state` (learned h0 when `None`).
/// Returns the segment loss in bits per sample and the detached final state.
pub fn tbptt_step(
    model: &mut SampleRnn<f32>,
    adam: &mut Adam<f32>,
    config: &TrainConfig,
    batch: &CodeBatch,
    state: Option<&RecurrentState<f32>>,
) -> Result<(f64, RecurrentState<f32>)> {
    let iteration = adam.step;
    let (nats, grads, next) = {
        let mut g = Graph::new();
        let (loss, nodes) = model.loss(&mut g, batch, state).map_err(|e| divergence(e, iteration))?;
        let nats = g.value(loss).data()[0] as f64;
        let grads = g.backward(loss).map_err(|e| divergence(e.into(), iteration))?;
        (nats, grads, nodes.detach(&g))
    };
    if !nats.is_finite() {
        return Err(TrainError::Divergence {
            iteration,
            last_checkpoint: None,
        });
    }
    let params = model.params_mut();
    params.zero_grads();
    params.accumulate(&grads);
    if !clip_grad_norm(params, config.clip_norm).is_finite() {
        return Err(TrainError::Divergence {
            iteration,
            last_checkpoint: None,
        });
    }
    adam.update(params, config.lr, config.beta1, config.beta2, config.eps);
    Ok((nats / std::f64::consts::LN_2, next))
}

/// Teacher-forced NLL in bits per sample over whole chunks, evaluated in
/// segments of `tbptt_len` with carried state. Randomized initial states are
/// drawn from a generator seeded with `seed`, so repeated calls agree.
pub fn validate(
    model: &SampleRnn<f32>,
    chunks: &[Vec<usize>],
    config: &TrainConfig,
    seed: u64,
) -> Result<f64> {
    if chunks.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let fs = model.config().frame_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut bits, mut count) = (0.0f64, 0usize);
    let ids: Vec<usize> = (0..chunks.len()).collect();
    for rows in ids.chunks(config.batch_size) {
        let len = chunks[rows[0]].len();
        if rows.iter().any(|&r| chunks[r].len() != len) || len % fs != 0 {
            return Err(TrainError::Data(format!(
                "validation chunks must share a length divisible by {fs}"
            )));
        }
        let mut state = model.start_state(rows.len(), &mut rng);
        let mut start = 0;
        while start + fs < len {
            let seg = (len - start).min(config.tbptt_len + fs);
            let out = model
                .forward_nll(&segment(chunks, rows, start, seg)?, state.as_ref())
                .map_err(|e| divergence(e, 0))?;
            bits += out.bits_per_sample * out.predictions as f64;
            count += out.predictions;
            state = Some(out.final_state);
            start += seg - fs;
        }
    }
    if count == 0 {
        return Err(TrainError::Data("validation chunks are too short to predict".into()));
    }
    if !bits.is_finite() {
        return Err(TrainError::Divergence {
            iteration: 0,
            last_checkpoint: None,
        });
    }
    Ok(bits / count as f64)
}

/// Owns the model and optimizer and walks batches through their chunks.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: SampleRnn<f32>,
    config: TrainConfig,
    adam: Adam<f32>,
    iteration: u64,
    rng: ChaCha8Rng,
    stream: BatchStream,
    rows: Vec<usize>,
    segment: usize,
    carried: Option<RecurrentState<f32>>,
    val_history: Vec<(u64, f64)>,
}

impl Trainer {
    pub fn new(model: SampleRnn<f32>, config: TrainConfig, n_train_chunks: usize) -> Result<Self> {
        config.validate(model.config().frame_size)?;
        let adam = Adam::new(model.params());
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1)),
            stream: BatchStream::new(config.seed, n_train_chunks)?,
            model,
            config,
            adam,
            iteration: 0,
            rows: Vec::new(),
            segment: 0,
            carried: None,
            val_history: Vec::new(),
        })
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        let model = SampleRnn::from_params(c.model_config, c.params)?;
        c.train_config.validate(model.config().frame_size)?;
        if !c.adam.matches(model.params()) {
            return Err(TrainError::Format("optimizer moments do not match parameters".into()));
        }
        Ok(Self {
            model,
            config: c.train_config,
            adam: c.adam,
            iteration: c.iteration,
            rng: c.rng,
            stream: c.stream,
            rows: c.rows,
            segment: c.segment,
            carried: c.carried,
            val_history: c.val_history,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model_config: self.model.config().clone(),
            train_config: self.config.clone(),
            iteration: self.iteration,
            params: self.model.params().clone(),
            adam: self.adam.clone(),
            rng: self.rng.clone(),
            stream: self.stream.clone(),
            rows: self.rows.clone(),
            segment: self.segment,
            carried: self.carried.clone(),
            val_history: self.val_history.clone(),
        }
    }

    pub fn model(&self) -> &SampleRnn<f32> {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut SampleRnn<f32> {
        &mut self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Overrides the iteration budget, e.g. when resuming with a larger target.
    pub fn set_max_iterations(&mut self, n: u64) {
        self.config.max_iterations = n;
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn val_history(&self) -> &[(u64, f64)] {
        &self.val_history
    }

    /// Passes over the training corpus so far.
    pub fn epochs(&self, corpus_samples: usize) -> f64 {
        (self.iteration as f64 * self.config.batch_size as f64 * self.config.tbptt_len as f64)
            / corpus_samples.max(1) as f64
    }

    /// One iteration; returns the segment loss in bits per sample.
    pub fn step(&mut self, data: &TrainData) -> Result<f64> {
        let fs = self.model.config().frame_size;
        let s = self.config.tbptt_len;
        let per_chunk = segment_count(data.chunk_len(), s, fs);
        if per_chunk == 0 {
            return Err(TrainError::Data(format!(
                "chunks of {} samples are shorter than one segment of {} + {fs}",
                data.chunk_len(),
                s
            )));
        }
        if self.stream.n_chunks() != data.train.len() {
            return Err(TrainError::Data(format!(
                "trainer was set up for {} chunks, data has {}",
                self.stream.n_chunks(),
                data.train.len()
            )));
        }
        if self.rows.is_empty() || self.segment >= per_chunk {
            self.rows = self.stream.next_batch(self.config.batch_size);
            self.segment = 0;
            self.carried = self.model.start_state(self.rows.len(), &mut self.rng);
        }
        let batch = segment(&data.train, &self.rows, self.segment * s, s + fs)?;
        let (bits, state) = tbptt_step(&mut self.model, &mut self.adam, &self.config, &batch, self.carried.as_ref())
            .map_err(|e| match e {
                TrainError::Divergence { last_checkpoint, .. } => TrainError::Divergence {
                    iteration: self.iteration,
                    last_checkpoint,
                },
                e => e,
            })?;
        self.carried = Some(state);
        self.segment += 1;
        self.iteration += 1;
        Ok(bits)
    }

    pub fn validate(&self, data: &TrainData) -> Result<f64> {
        validate(&self.model, &data.val, &self.config, self.config.seed.wrapping_add(2))
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLine {
    pub iteration: u64,
    pub train_bits: f64,
    pub val_bits: f64,
    pub secs: f64,
}

impl fmt::Display for MetricsLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter={} train_bits={:.4} val_bits={:.4} secs={:.1}",
            self.iteration, self.train_bits, self.val_bits, self.secs
        )
    }
}

type CheckpointHook<'h> = Box<dyn FnMut(&Trainer, &Path) -> std::result::Result<(), String> + 'h>;

#[derive(Default)]
pub struct LoopOptions<'h> {
    /// Directory for `ckpt_<iteration>.bin` files; no checkpoints when `None`.
    pub checkpoint_dir: Option<PathBuf>,
    /// Metrics lines are appended here as well as returned.
    pub metrics_path: Option<PathBuf>,
    /// Called after every checkpoint is written, e.g. to generate and inspect clips.
    pub on_checkpoint: Option<CheckpointHook<'h>>,
    /// Called for every metrics line.
    pub on_metrics: Option<Box<dyn FnMut(&MetricsLine) + 'h>>,
}

#[derive(Debug, Clone, Default)]
pub struct LoopSummary {
    pub metrics: Vec<MetricsLine>,
    pub checkpoints: Vec<PathBuf>,
    pub train_bits: Vec<f64>,
}

/// Runs [`Trainer::step`] until `max_iterations`, validating every
/// `validate_every` and checkpointing every `checkpoint_every` iterations
/// (and once more at the end).
pub fn train_loop(trainer: &mut Trainer, data: &TrainData, mut opts: LoopOptions<'_>) -> Result<LoopSummary> {
    if data.val.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let started = Instant::now();
    let mut summary = LoopSummary::default();
    let mut window = (0.0f64, 0usize);
    let mut last_checkpoint: Option<PathBuf> = None;
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|source| TrainError::Io {
            path: dir.clone(),
            source,
        })?;
    }
    let max = trainer.config().max_iterations;
    while trainer.iteration() < max {
        let diverged = |e, iteration| match e {
            TrainError::Divergence { .. } => TrainError::Divergence {
                iteration,
                last_checkpoint: last_checkpoint.clone(),
            },
            e => e,
        };
        let bits = trainer.step(data).map_err(|e| diverged(e, trainer.iteration()))?;
        summary.train_bits.push(bits);
        window.0 += bits;
        window.1 += 1;
        let it = trainer.iteration();
        let last = it == max;
        if it % trainer.config().validate_every == 0 || last {
            let val_bits = trainer.validate(data).map_err(|e| diverged(e, it))?;
            trainer.val_history.push((it, val_bits));
            let line = MetricsLine {
                iteration: it,
                train_bits: window.0 / window.1 as f64,
                val_bits,
                secs: started.elapsed().as_secs_f64(),
            };
            window = (0.0, 0);
            log::info!("{line}");
            if let Some(path) = &opts.metrics_path {
                let mut f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .and_then(|mut f| writeln!(f, "{line}").map(|_| f))
                    .map_err(|source| TrainError::Io {
                        path: path.clone(),
                        source,
                    })?;
                f.flush().ok();
            }
            if let Some(cb) = opts.on_metrics.as_mut() {
                cb(&line);
            }
            summary.metrics.push(line);
        }
        if it % trainer.config().checkpoint_every == 0 || last {
            if let Some(dir) = &opts.checkpoint_dir {
                let path = dir.join(format!("ckpt_{it:08}.bin"));
                save_checkpoint(&path, &trainer.checkpoint())?;
                if let Some(hook) = opts.on_checkpoint.as_mut() {
                    hook(trainer, &path).map_err(TrainError::Hook)?;
                }
                summary.checkpoints.push(path.clone());
                last_checkpoint = Some(path);
            }
        }
    }
    Ok(summary)
}
