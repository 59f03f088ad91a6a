use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::numerics::{lit, Graph, NodeId, NumericsError, ParamId, ParamStore, Real, Tensor};

use super::cells::{gru_cell, lstm_cell, upsample, GruWeights, LstmWeights};
use super::{CellKind, H0Mode, ModelConfig, ModelError, Quantizer, Result, RANDOM_H0_STD};

/// Quantized codes, `rows` sequences of `len` codes each, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeBatch {
    rows: usize,
    len: usize,
    data: Vec<usize>,
}

impl CodeBatch {
    pub fn new(rows: usize, len: usize, data: Vec<usize>) -> Result<Self> {
        if rows == 0 || len == 0 || data.len() != rows * len {
            return Err(ModelError::Numerics(NumericsError::Shape(format!(
                "code batch of {rows}×{len} cannot hold {} codes",
                data.len()
            ))));
        }
        Ok(Self { rows, len, data })
    }

    pub fn from_rows(rows: &[Vec<usize>]) -> Result<Self> {
        let len = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != len) {
            return Err(ModelError::Numerics(NumericsError::Shape("ragged code rows".into())));
        }
        Self::new(rows.len(), len, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, b: usize) -> &[usize] {
        &self.data[b * self.len..(b + 1) * self.len]
    }

    pub fn data(&self) -> &[usize] {
        &self.data
    }
}

/// Detached per-layer recurrent state, each entry `[batch × hidden_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState<T> {
    pub h: Vec<Tensor<T>>,
    /// Cell vectors, present for LSTM stacks only.
    pub c: Option<Vec<Tensor<T>>>,
}

impl<T: Real> RecurrentState<T> {
    pub fn batch(&self) -> usize {
        self.h.first().map_or(0, |t| t.rows())
    }

    pub fn layers(&self) -> usize {
        self.h.len()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().all(|t| t.all_finite())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.h.iter().chain(self.c.iter().flatten())
    }

    /// Stacks single- or multi-row states along the batch dimension.
    pub fn stack(parts: &[RecurrentState<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| ModelError::State("nothing to stack".into()))?;
        let cat = |pick: &dyn Fn(&RecurrentState<T>) -> Option<&Vec<Tensor<T>>>| -> Result<Option<Vec<Tensor<T>>>> {
            let Some(layers) = pick(first) else {
                return Ok(None);
            };
            let mut out = Vec::with_capacity(layers.len());
            for l in 0..layers.len() {
                let cols = layers[l].cols();
                let mut data = Vec::new();
                let mut rows = 0;
                for p in parts {
                    let t = pick(p)
                        .and_then(|v| v.get(l))
                        .filter(|t| t.cols() == cols)
                        .ok_or_else(|| ModelError::State("states disagree in layout".into()))?;
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                out.push(Tensor::new(&[rows, cols], data)?);
            }
            Ok(Some(out))
        };
        Ok(Self {
            h: cat(&|s| Some(&s.h))?.unwrap_or_default(),
            c: cat(&|s| s.c.as_ref())?,
        })
    }
}

/// Recurrent state inside a graph.
#[derive(Debug, Clone)]
pub struct StateNodes {
    pub h: Vec<NodeId>,
    pub c: Option<Vec<NodeId>>,
}

impl StateNodes {
    pub fn detach<T: Real>(&self, g: &Graph<'_, T>) -> RecurrentState<T> {
        RecurrentState {
            h: self.h.iter().map(|&n| g.value(n).clone()).collect(),
            c: self
                .c
                .as_ref()
                .map(|cs| cs.iter().map(|&n| g.value(n).clone()).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Weight {
    Plain(ParamId),
    Normed { v: ParamId, g: ParamId },
}

#[derive(Debug, Clone, PartialEq)]
struct Linear {
    w: Weight,
    b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
enum CellIds {
    Lstm { wx: Weight, wh: Weight, b: ParamId },
    Gru { wx: Weight, wh_zr: Weight, wh_n: Weight, b: ParamId },
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    frame_in: Linear,
    cells: Vec<CellIds>,
    h0: Vec<(ParamId, Option<ParamId>)>,
    upsample: Linear,
    embed: ParamId,
    sample_in: Linear,
    sample_hidden: Linear,
    out: Linear,
}

/// The model's weights as graph nodes, resolved once per graph.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub frame_in: (NodeId, NodeId),
    pub cells: Vec<ResolvedCell>,
    pub h0: Vec<(NodeId, Option<NodeId>)>,
    pub upsample: (NodeId, NodeId),
    pub embed: NodeId,
    pub sample_in: (NodeId, NodeId),
    pub sample_hidden: (NodeId, NodeId),
    pub out: (NodeId, NodeId),
}

#[derive(Debug, Clone, Copy)]
pub enum ResolvedCell {
    Lstm(LstmWeights),
    Gru(GruWeights),
}

enum Init {
    Weight,
    Bias(Vec<(Range<usize>, f64)>),
    Zero,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn param_specs(c: &ModelConfig) -> Vec<ParamSpec> {
    let (h, fs, q, e) = (c.hidden_dim, c.frame_size, c.q_levels, c.embed_size);
    let mut specs = Vec::new();
    let linear = |specs: &mut Vec<ParamSpec>, name: &str, fan_in: usize, fan_out: usize| {
        specs.push(ParamSpec {
            name: name.to_string(),
            shape: vec![fan_in, fan_out],
            init: Init::Weight,
        });
        specs.push(ParamSpec {
            name: format!("{name}.b"),
            shape: vec![fan_out],
            init: Init::Bias(vec![]),
        });
    };
    linear(&mut specs, "frame.in", fs, h);
    for l in 0..c.n_layers {
        let weight = |name: String, rows: usize, cols: usize| ParamSpec {
            name,
            shape: vec![rows, cols],
            init: Init::Weight,
        };
        match c.cell {
            CellKind::Lstm => {
                specs.push(weight(format!("frame.l{l}.wx"), h, 4 * h));
                specs.push(weight(format!("frame.l{l}.wh"), h, 4 * h));
                specs.push(ParamSpec {
                    name: format!("frame.l{l}.b"),
                    shape: vec![4 * h],
                    init: Init::Bias(vec![(h..2 * h, c.forget_bias_init)]),
                });
            }
            CellKind::Gru => {
                specs.push(weight(format!("frame.l{l}.wx"), h, 3 * h));
                specs.push(weight(format!("frame.l{l}.wh_zr"), h, 2 * h));
                specs.push(weight(format!("frame.l{l}.wh_n"), h, h));
                specs.push(ParamSpec {
                    name: format!("frame.l{l}.b"),
                    shape: vec![3 * h],
                    init: Init::Bias(vec![]),
                });
            }
        }
    }
    linear(&mut specs, "frame.up", h, fs * h);
    specs.push(ParamSpec {
        name: "sample.embed".into(),
        shape: vec![q, e],
        init: Init::Weight,
    });
    linear(&mut specs, "sample.in", fs * e, h);
    linear(&mut specs, "sample.hidden", h, h);
    linear(&mut specs, "sample.out", h, q);
    if c.h0_mode == H0Mode::Learned {
        for l in 0..c.n_layers {
            specs.push(ParamSpec {
                name: format!("frame.l{l}.h0"),
                shape: vec![h],
                init: Init::Zero,
            });
            if c.cell == CellKind::Lstm {
                specs.push(ParamSpec {
                    name: format!("frame.l{l}.c0"),
                    shape: vec![h],
                    init: Init::Zero,
                });
            }
        }
    }
    specs
}

/// Weight matrices that are reparameterized when weight normalization is on.
fn is_normalizable(name: &str) -> bool {
    name != "sample.embed"
}

/// Parameter store plus configuration of the two-tier model.
#[derive(Debug, Clone)]
pub struct SampleRnn<T: Real> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
    quantizer: Quantizer,
}

/// Result of a teacher-forced pass over a batch.
#[derive(Debug, Clone)]
pub struct ForwardNll<T> {
    pub bits_per_sample: f64,
    /// Number of predicted positions that entered the mean.
    pub predictions: usize,
    pub final_state: RecurrentState<T>,
}

impl<T: Real> SampleRnn<T> {
    /// Glorot-uniform weights, zero biases except the LSTM forget gates, zero learned h0.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        for spec in param_specs(&config) {
            let n: usize = spec.shape.iter().product();
            match spec.init {
                Init::Weight => {
                    let a = (6.0 / (spec.shape[0] + spec.shape[1]) as f64).sqrt();
                    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-a..a)).collect();
                    if config.weight_norm && is_normalizable(&spec.name) {
                        let cols = spec.shape[1];
                        let mut norms = vec![0.0f64; cols];
                        for row in data.chunks_exact(cols) {
                            for (s, x) in norms.iter_mut().zip(row) {
                                *s += x * x;
                            }
                        }
                        let gain = norms.into_iter().map(|s| lit::<T>(s.sqrt())).collect();
                        let v = data.into_iter().map(lit::<T>).collect();
                        params.insert(format!("{}.v", spec.name), Tensor::new(&spec.shape, v)?)?;
                        params.insert(format!("{}.g", spec.name), Tensor::vector(gain))?;
                    } else {
                        let name = if is_normalizable(&spec.name) {
                            format!("{}.w", spec.name)
                        } else {
                            spec.name.clone()
                        };
                        let w = data.into_iter().map(lit::<T>).collect();
                        params.insert(name, Tensor::new(&spec.shape, w)?)?;
                    }
                }
                Init::Bias(overrides) => {
                    let mut b = Tensor::zeros(&spec.shape);
                    for (range, value) in overrides {
                        b.data_mut()[range].iter_mut().for_each(|x| *x = lit(value));
                    }
                    params.insert(spec.name, b)?;
                }
                Init::Zero => {
                    params.insert(spec.name, Tensor::zeros(&spec.shape))?;
                }
            }
        }
        Self::from_params(config, params)
    }

    /// Wraps an existing parameter store, checking every expected parameter and shape.
    /// Each weight matrix may be stored plain (`name.w`) or normalized (`name.v`, `name.g`).
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let mut expected = 0;
        for spec in param_specs(&config) {
            let check = |name: &str, shape: &[usize]| -> Result<()> {
                let t = params.get(name).ok_or_else(|| NumericsError::UnknownParam(name.into()))?;
                if t.shape() != shape {
                    return Err(ModelError::Config(format!(
                        "parameter {name} has shape {:?}, expected {shape:?}",
                        t.shape()
                    )));
                }
                Ok(())
            };
            match spec.init {
                Init::Weight if is_normalizable(&spec.name) => {
                    let plain = format!("{}.w", spec.name);
                    if params.get(&plain).is_some() {
                        check(&plain, &spec.shape)?;
                        expected += 1;
                    } else {
                        check(&format!("{}.v", spec.name), &spec.shape)?;
                        check(&format!("{}.g", spec.name), &spec.shape[1..])?;
                        expected += 2;
                    }
                }
                _ => {
                    check(&spec.name, &spec.shape)?;
                    expected += 1;
                }
            }
        }
        if expected != params.len() {
            return Err(ModelError::Config(format!(
                "parameter store holds {} tensors, the configuration uses {expected}",
                params.len()
            )));
        }
        let layout = Layout::new(&config, &params)?;
        let quantizer = config.quantizer()?;
        Ok(Self {
            config,
            params,
            layout,
            quantizer,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    pub fn quantizer(&self) -> Quantizer {
        self.quantizer
    }

    pub fn cast<U: Real>(&self) -> SampleRnn<U> {
        SampleRnn::from_params(self.config.clone(), self.params.cast())
            .expect("casting preserves names and shapes")
    }

    /// Zeroes the output projection so the model predicts the uniform distribution.
    pub fn zero_output_layer(&mut self) {
        let out = self.layout.out.clone();
        let target = match out.w {
            Weight::Plain(w) => w,
            Weight::Normed { g, .. } => g,
        };
        for id in [target, out.b] {
            self.params.value_mut(id).data_mut().iter_mut().for_each(|x| *x = T::zero());
        }
    }

    /// Effective weight matrices with normalization folded in; used for generation.
    pub fn inference_view(&self) -> Result<Self> {
        let mut g = Graph::new();
        let mut folded = ParamStore::new();
        for (id, name, value) in self.params.iter() {
            if let Some(base) = name.strip_suffix(".v") {
                let gain = self.params.require(&format!("{base}.g"))?;
                let v = g.param(&self.params, id);
                let gn = g.param(&self.params, gain);
                let w = g.weight_norm_apply(v, gn)?;
                folded.insert(format!("{base}.w"), g.value(w).clone())?;
            } else if name.ends_with(".g") && self.params.get(&format!("{}.v", &name[..name.len() - 2])).is_some() {
                continue;
            } else {
                folded.insert(name, value.clone())?;
            }
        }
        Self::from_params(self.config.clone(), folded)
    }

    fn resolve_weight<'a>(g: &mut Graph<'a, T>, params: &'a ParamStore<T>, w: &Weight) -> Result<NodeId> {
        Ok(match *w {
            Weight::Plain(id) => g.param(params, id),
            Weight::Normed { v, g: gain } => {
                let v = g.param(params, v);
                let gain = g.param(params, gain);
                g.weight_norm_apply(v, gain)?
            }
        })
    }

    fn resolve_linear<'a>(g: &mut Graph<'a, T>, params: &'a ParamStore<T>, l: &Linear) -> Result<(NodeId, NodeId)> {
        let w = Self::resolve_weight(g, params, &l.w)?;
        Ok((w, g.param(params, l.b)))
    }

    /// Adds every weight to `g` (normalizing where configured).
    pub fn resolve<'a>(&'a self, g: &mut Graph<'a, T>) -> Result<Resolved> {
        self.resolve_in(g, &self.params)
    }

    /// Like [`SampleRnn::resolve`], but reads the weights from `params`, which
    /// must hold the same names and shapes as the model's own store.
    pub fn resolve_in<'a>(&self, g: &mut Graph<'a, T>, params: &'a ParamStore<T>) -> Result<Resolved> {
        let same = params.len() == self.params.len()
            && self
                .params
                .iter()
                .zip(params.iter())
                .all(|((_, a, x), (_, b, y))| a == b && x.shape() == y.shape());
        if !same {
            return Err(ModelError::Config("parameter store does not match the model layout".into()));
        }
        let l = &self.layout;
        let frame_in = Self::resolve_linear(g, params, &l.frame_in)?;
        let mut cells = Vec::with_capacity(l.cells.len());
        for c in &l.cells {
            cells.push(match c {
                CellIds::Lstm { wx, wh, b } => ResolvedCell::Lstm(LstmWeights {
                    wx: Self::resolve_weight(g, params, wx)?,
                    wh: Self::resolve_weight(g, params, wh)?,
                    b: g.param(params, *b),
                }),
                CellIds::Gru { wx, wh_zr, wh_n, b } => ResolvedCell::Gru(GruWeights {
                    wx: Self::resolve_weight(g, params, wx)?,
                    wh_zr: Self::resolve_weight(g, params, wh_zr)?,
                    wh_n: Self::resolve_weight(g, params, wh_n)?,
                    b: g.param(params, *b),
                }),
            });
        }
        let h0 = l
            .h0
            .iter()
            .map(|&(h, c)| (g.param(params, h), c.map(|c| g.param(params, c))))
            .collect();
        Ok(Resolved {
            frame_in,
            cells,
            h0,
            upsample: Self::resolve_linear(g, params, &l.upsample)?,
            embed: g.param(params, l.embed),
            sample_in: Self::resolve_linear(g, params, &l.sample_in)?,
            sample_hidden: Self::resolve_linear(g, params, &l.sample_hidden)?,
            out: Self::resolve_linear(g, params, &l.out)?,
        })
    }

    /// Draws a randomized initial state for `batch` rows, row after row from `rng`.
    pub fn random_state(&self, batch: usize, rng: &mut impl Rng) -> RecurrentState<T> {
        let h = self.config.hidden_dim;
        let normal = Normal::new(0.0, RANDOM_H0_STD).expect("valid std");
        let lstm = self.config.cell == CellKind::Lstm;
        let mut hs = vec![Vec::with_capacity(batch * h); self.config.n_layers];
        let mut cs = vec![Vec::with_capacity(batch * h); self.config.n_layers];
        for _ in 0..batch {
            for l in 0..self.config.n_layers {
                hs[l].extend((0..h).map(|_| lit::<T>(normal.sample(rng))));
                if lstm {
                    cs[l].extend((0..h).map(|_| lit::<T>(normal.sample(rng))));
                }
            }
        }
        let mk = |v: Vec<Vec<T>>| {
            v.into_iter()
                .map(|d| Tensor::new(&[batch, h], d).expect("state shape"))
                .collect::<Vec<_>>()
        };
        RecurrentState {
            h: mk(hs),
            c: lstm.then(|| mk(cs)),
        }
    }

    /// Initial state for a sequence start, drawing from `rng` when h0 is randomized.
    pub fn start_state(&self, batch: usize, rng: &mut impl Rng) -> Option<RecurrentState<T>> {
        match self.config.h0_mode {
            H0Mode::Learned => None,
            H0Mode::Randomized => Some(self.random_state(batch, rng)),
        }
    }

    /// Places the starting state in the graph: `None` means the learned h0.
    pub fn state_nodes(
        &self,
        g: &mut Graph<'_, T>,
        r: &Resolved,
        batch: usize,
        start: Option<&RecurrentState<T>>,
    ) -> Result<StateNodes> {
        let lstm = self.config.cell == CellKind::Lstm;
        let h = self.config.hidden_dim;
        match start {
            Some(s) => {
                let ok_shape = |t: &Tensor<T>| t.shape() == [batch, h];
                if s.layers() != self.config.n_layers
                    || !s.h.iter().all(ok_shape)
                    || s.c.is_some() != lstm
                    || !s.c.iter().flatten().all(ok_shape)
                {
                    return Err(ModelError::State(format!(
                        "expected {} layers of [{batch} × {h}]{}",
                        self.config.n_layers,
                        if lstm { " with cell vectors" } else { "" }
                    )));
                }
                Ok(StateNodes {
                    h: s.h.iter().map(|t| g.constant(t.clone())).collect(),
                    c: s.c.as_ref().map(|cs| cs.iter().map(|t| g.constant(t.clone())).collect()),
                })
            }
            None => {
                if r.h0.is_empty() {
                    return Err(ModelError::State(
                        "h0 is randomized; the caller must supply a drawn state".into(),
                    ));
                }
                let mut hs = Vec::new();
                let mut cs = Vec::new();
                for &(h0, c0) in &r.h0 {
                    let z = g.constant(Tensor::zeros(&[batch, h]));
                    hs.push(g.add_bias(z, h0)?);
                    if let Some(c0) = c0 {
                        let z = g.constant(Tensor::zeros(&[batch, h]));
                        cs.push(g.add_bias(z, c0)?);
                    }
                }
                Ok(StateNodes {
                    h: hs,
                    c: lstm.then_some(cs),
                })
            }
        }
    }

    /// Advances the recurrent stack by one frame and upsamples its output.
    /// `frame` is `[B × frame_size]` of real amplitudes; the result is
    /// `[B·frame_size × hidden_dim]` with rows ordered (batch row, intra-frame position).
    pub fn frame_step(
        &self,
        g: &mut Graph<'_, T>,
        r: &Resolved,
        frame: NodeId,
        state: &StateNodes,
    ) -> Result<(NodeId, StateNodes)> {
        let mut input = g.affine(frame, r.frame_in.0, r.frame_in.1)?;
        let mut next = StateNodes {
            h: Vec::with_capacity(r.cells.len()),
            c: state.c.as_ref().map(|_| Vec::with_capacity(r.cells.len())),
        };
        let mut skip: Option<NodeId> = None;
        for (l, cell) in r.cells.iter().enumerate() {
            let h = match cell {
                ResolvedCell::Lstm(w) => {
                    let c = state
                        .c
                        .as_ref()
                        .map(|cs| cs[l])
                        .ok_or_else(|| ModelError::State("LSTM state lacks cell vectors".into()))?;
                    let (h, c) = lstm_cell(g, input, state.h[l], c, w)?;
                    next.c.as_mut().expect("lstm state").push(c);
                    h
                }
                ResolvedCell::Gru(w) => gru_cell(g, input, state.h[l], w)?,
            };
            next.h.push(h);
            if self.config.skip_connections {
                skip = Some(match skip {
                    Some(acc) => g.add(acc, h)?,
                    None => h,
                });
            }
            input = h;
        }
        let top = skip.unwrap_or(input);
        let cond = upsample(g, top, r.upsample.0, r.upsample.1, self.config.frame_size)?;
        Ok((cond, next))
    }

    fn frame_input(&self, codes: &CodeBatch, frame: usize) -> Result<Tensor<T>> {
        let fs = self.config.frame_size;
        let mut data = Vec::with_capacity(codes.rows() * fs);
        for b in 0..codes.rows() {
            for &c in &codes.row(b)[frame * fs..(frame + 1) * fs] {
                data.push(lit::<T>(self.quantizer.dequantize(c)?));
            }
        }
        Ok(Tensor::new(&[codes.rows(), fs], data)?)
    }

    fn frames_forward(
        &self,
        g: &mut Graph<'_, T>,
        r: &Resolved,
        codes: &CodeBatch,
        frames: Range<usize>,
        start: Option<&RecurrentState<T>>,
    ) -> Result<(NodeId, StateNodes)> {
        let mut state = self.state_nodes(g, r, codes.rows(), start)?;
        let mut conds = Vec::with_capacity(frames.len());
        for k in frames {
            let x = self.frame_input(codes, k)?;
            let x = g.constant(x);
            let (cond, next) = self.frame_step(g, r, x, &state)?;
            conds.push(cond);
            state = next;
        }
        Ok((g.concat_rows(&conds)?, state))
    }

    fn check_framing(&self, codes: &CodeBatch) -> Result<()> {
        let fs = self.config.frame_size;
        if codes.len() % fs != 0 {
            return Err(ModelError::Framing {
                len: codes.len(),
                frame_size: fs,
            });
        }
        Ok(())
    }

    /// Runs the frame tier over every frame of `codes` (`[B × T·frame_size]`).
    /// Returns conditioning vectors `[T·B·frame_size × hidden_dim]`, rows
    /// ordered (frame, batch row, intra-frame position); the vectors produced
    /// from frame `t` condition the predictions of frame `t + 1`.
    pub fn frame_tier_forward(
        &self,
        g: &mut Graph<'_, T>,
        r: &Resolved,
        codes: &CodeBatch,
        start: Option<&RecurrentState<T>>,
    ) -> Result<(NodeId, StateNodes)> {
        self.check_framing(codes)?;
        let frames = codes.len() / self.config.frame_size;
        self.frames_forward(g, r, codes, 0..frames, start)
    }

    /// Sample-tier MLP. `windows` holds `frame_size` previous codes per row and
    /// `cond` is `[rows × hidden_dim]`; returns logits `[rows × q_levels]`.
    pub fn sample_tier_forward(
        &self,
        g: &mut Graph<'_, T>,
        r: &Resolved,
        windows: &[usize],
        cond: NodeId,
    ) -> Result<NodeId> {
        let fs = self.config.frame_size;
        let rows = g.shape(cond)[0];
        if windows.len() != rows * fs {
            return Err(NumericsError::Shape(format!(
                "sample tier: {} window codes for {rows} rows of frame size {fs}",
                windows.len()
            ))
            .into());
        }
        let emb = g.embedding(r.embed, windows)?;
        let emb = g.reshape(emb, &[rows, fs * self.config.embed_size])?;
        let x = g.affine(emb, r.sample_in.0, r.sample_in.1)?;
        let x = g.add(x, cond)?;
        let x = g.relu(x)?;
        let x = g.affine(x, r.sample_hidden.0, r.sample_hidden.1)?;
        let x = g.relu(x)?;
        Ok(g.affine(x, r.out.0, r.out.1)?)
    }

    /// Row of [`SampleRnn::logits`] output that predicts position `p` of batch row `b`.
    pub fn logit_row(&self, batch: usize, b: usize, p: usize) -> usize {
        let fs = self.config.frame_size;
        ((p / fs - 1) * batch + b) * fs + p % fs
    }

    /// Teacher-forced logits for every position with a full frame of history
    /// (positions `frame_size..L`), plus their targets and the state after the
    /// last consumed frame. The final frame is only predicted, never consumed,
    /// so consecutive segments must overlap by one frame.
    pub fn logits(
        &self,
        g: &mut Graph<'_, T>,
        r: &Resolved,
        codes: &CodeBatch,
        start: Option<&RecurrentState<T>>,
    ) -> Result<(NodeId, Vec<usize>, StateNodes)> {
        self.check_framing(codes)?;
        let fs = self.config.frame_size;
        let min = 2 * fs;
        if codes.len() < min {
            return Err(ModelError::TooShort {
                len: codes.len(),
                min,
            });
        }
        let steps = codes.len() / fs - 1;
        let (cond, state) = self.frames_forward(g, r, codes, 0..steps, start)?;
        let batch = codes.rows();
        let rows = steps * batch * fs;
        let mut windows = Vec::with_capacity(rows * fs);
        let mut targets = Vec::with_capacity(rows);
        for s in 0..steps {
            for b in 0..batch {
                let row = codes.row(b);
                for j in 0..fs {
                    let p = (s + 1) * fs + j;
                    windows.extend_from_slice(&row[p - fs..p]);
                    targets.push(row[p]);
                }
            }
        }
        let logits = self.sample_tier_forward(g, r, &windows, cond)?;
        Ok((logits, targets, state))
    }

    /// Mean negative log-likelihood in nats as a graph node, for training.
    pub fn loss<'a>(
        &'a self,
        g: &mut Graph<'a, T>,
        codes: &CodeBatch,
        start: Option<&RecurrentState<T>>,
    ) -> Result<(NodeId, StateNodes)> {
        let r = self.resolve(g)?;
        let (logits, targets, state) = self.logits(g, &r, codes, start)?;
        let loss = g.softmax_cross_entropy(logits, &targets)?;
        Ok((loss, state))
    }

    /// Teacher-forced mean NLL in bits per predicted sample.
    pub fn forward_nll(&self, codes: &CodeBatch, start: Option<&RecurrentState<T>>) -> Result<ForwardNll<T>> {
        let mut g = Graph::new();
        let (loss, state) = self.loss(&mut g, codes, start)?;
        let nats = g.value(loss).data()[0].to_f64().unwrap_or(f64::NAN);
        Ok(ForwardNll {
            bits_per_sample: nats / std::f64::consts::LN_2,
            predictions: codes.rows() * (codes.len() - self.config.frame_size),
            final_state: state.detach(&g),
        })
    }

    /// Logits tensor of [`SampleRnn::logits`] without building a reusable graph.
    pub fn forward_logits(&self, codes: &CodeBatch, start: Option<&RecurrentState<T>>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let r = self.resolve(&mut g)?;
        let (logits, _, _) = self.logits(&mut g, &r, codes, start)?;
        Ok(g.value(logits).clone())
    }
}

impl Layout {
    fn new<T: Real>(c: &ModelConfig, p: &ParamStore<T>) -> Result<Self> {
        let weight = |base: &str| -> Result<Weight> {
            if let Some(w) = p.id(&format!("{base}.w")) {
                return Ok(Weight::Plain(w));
            }
            Ok(Weight::Normed {
                v: p.require(&format!("{base}.v"))?,
                g: p.require(&format!("{base}.g"))?,
            })
        };
        let linear = |base: &str| -> Result<Linear> {
            Ok(Linear {
                w: weight(base)?,
                b: p.require(&format!("{base}.b"))?,
            })
        };
        let mut cells = Vec::new();
        let mut h0 = Vec::new();
        for l in 0..c.n_layers {
            cells.push(match c.cell {
                CellKind::Lstm => CellIds::Lstm {
                    wx: weight(&format!("frame.l{l}.wx"))?,
                    wh: weight(&format!("frame.l{l}.wh"))?,
                    b: p.require(&format!("frame.l{l}.b"))?,
                },
                CellKind::Gru => CellIds::Gru {
                    wx: weight(&format!("frame.l{l}.wx"))?,
                    wh_zr: weight(&format!("frame.l{l}.wh_zr"))?,
                    wh_n: weight(&format!("frame.l{l}.wh_n"))?,
                    b: p.require(&format!("frame.l{l}.b"))?,
                },
            });
            if c.h0_mode == H0Mode::Learned {
                let c0 = match c.cell {
                    CellKind::Lstm => Some(p.require(&format!("frame.l{l}.c0"))?),
                    CellKind::Gru => None,
                };
                h0.push((p.require(&format!("frame.l{l}.h0"))?, c0));
            }
        }
        Ok(Self {
            frame_in: linear("frame.in")?,
            cells,
            h0,
            upsample: linear("frame.up")?,
            embed: p.require("sample.embed")?,
            sample_in: linear("sample.in")?,
            sample_hidden: linear("sample.hidden")?,
            out: linear("sample.out")?,
        })
    }
}
