//! Finite-difference checks of every layer the model is built from, on seeded
//! toy shapes in double precision.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::{grad_check, GradCheckOptions, GradCheckReport, Graph, NodeId, ParamStore, Tensor};

use super::cells::{gru_cell, lstm_cell, upsample, GruWeights, LstmWeights};
use super::{CellKind, CodeBatch, H0Mode, ModelConfig, Result, SampleRnn};

/// Layers covered by [`gradient_suite`], in report order.
pub const SUITE_LAYERS: [&str; 12] = [
    "affine",
    "sigmoid",
    "tanh",
    "relu",
    "softmax_ce",
    "lstm_cell",
    "gru_cell",
    "weight_norm",
    "embedding",
    "upsampler",
    "model_lstm",
    "model_gru",
];

#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub report: GradCheckReport,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub checks: Vec<LayerCheck>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.report.passed())
    }

    pub fn max_rel_err(&self) -> f64 {
        self.checks.iter().map(|c| c.report.max_rel_err()).fold(0.0, f64::max)
    }

    /// Parameter groups at or above tolerance.
    pub fn failures(&self) -> usize {
        self.checks
            .iter()
            .map(|c| c.report.params.iter().filter(|p| !(p.max_rel_err < c.report.tolerance)).count())
            .sum()
    }
}

/// One line per parameter group: `layer param coords max_rel_err ok|FAIL`.
impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            for p in &c.report.params {
                writeln!(
                    f,
                    "{:<12} {:<18} coords={:<5} max_rel_err={:.3e} {}",
                    c.layer,
                    p.name,
                    p.coords_checked,
                    p.max_rel_err,
                    if p.max_rel_err < c.report.tolerance { "ok" } else { "FAIL" }
                )?;
            }
        }
        Ok(())
    }
}

fn random_store(shapes: &[(&str, &[usize])], rng: &mut ChaCha8Rng) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    for (name, shape) in shapes {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        s.insert(*name, Tensor::new(shape, data).expect("shape")).expect("unique names");
    }
    s
}

/// Random fixed weights for a scalar readout of a node of the given shape.
fn readout_weights(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

fn readout(g: &mut Graph<'_, f64>, y: NodeId, seed: u64) -> Result<NodeId> {
    let w = g.constant(readout_weights(g.shape(y), seed));
    let p = g.mul(y, w)?;
    Ok(g.sum(p)?)
}

fn p<'a>(g: &mut Graph<'a, f64>, s: &'a ParamStore<f64>, name: &str) -> Result<NodeId> {
    Ok(g.param(s, s.require(name)?))
}

fn pointwise_check(
    layer: &'static str,
    rng: &mut ChaCha8Rng,
    tol: f64,
    opts: &GradCheckOptions,
) -> Result<LayerCheck> {
    let mut s = random_store(&[("x", &[4, 6])], rng);
    // stay clear of the relu kink
    for v in s.value_mut(s.require("x")?).data_mut() {
        *v = v.signum() * (0.1 + 0.9 * v.abs());
    }
    let report = grad_check(
        |g, s| -> Result<NodeId> {
            let x = p(g, s, "x")?;
            let y = match layer {
                "sigmoid" => g.sigmoid(x)?,
                "tanh" => g.tanh(x)?,
                _ => g.relu(x)?,
            };
            readout(g, y, 11)
        },
        &s,
        tol,
        opts,
    )?;
    Ok(LayerCheck { layer, report })
}

fn tiny_model(cell: CellKind, h0_mode: H0Mode, weight_norm: bool, rng: &mut ChaCha8Rng) -> Result<SampleRnn<f64>> {
    let config = ModelConfig {
        q_levels: 12,
        embed_size: 3,
        hidden_dim: 5,
        n_layers: 2,
        cell,
        frame_size: 2,
        sample_rate: 8_000,
        h0_mode,
        skip_connections: true,
        weight_norm,
        forget_bias_init: 3.0,
        seed: rng.random(),
    };
    let mut model = SampleRnn::<f64>::init(config)?;
    // perturb every parameter so that zero biases and zero h0 are not special points
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        for v in model.params_mut().value_mut(id).data_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    Ok(model)
}

fn model_check(
    layer: &'static str,
    model: &SampleRnn<f64>,
    rng: &mut ChaCha8Rng,
    tol: f64,
    opts: &GradCheckOptions,
) -> Result<LayerCheck> {
    let q = model.config().q_levels;
    let (rows, len) = (2, 8);
    let codes = CodeBatch::new(rows, len, (0..rows * len).map(|_| rng.random_range(0..q)).collect())?;
    let start = model.start_state(rows, rng);
    let report = grad_check(
        |g, s| -> Result<NodeId> {
            let r = model.resolve_in(g, s)?;
            let (logits, targets, _) = model.logits(g, &r, &codes, start.as_ref())?;
            Ok(g.softmax_cross_entropy(logits, &targets)?)
        },
        model.params(),
        tol,
        opts,
    )?;
    Ok(LayerCheck { layer, report })
}

/// Runs the finite-difference check on every entry of [`SUITE_LAYERS`].
///
/// Each layer gets random parameters and inputs (inputs are checked as
/// parameters too) and a random linear readout to a scalar, so every output
/// coordinate carries a distinct weight. The LSTM bias starts with its forget
/// block at 3 and runs two steps so the gradient passes through the kept cell
/// state; the GRU also runs two steps. The two full-model checks cover the
/// LSTM stack with weight normalization and learned h0, and the GRU stack
/// with plain weights and a randomized initial state.
pub fn gradient_suite(tolerance: f64, opts: &GradCheckOptions) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::with_capacity(SUITE_LAYERS.len());

    let s = random_store(&[("x", &[3, 4]), ("w", &[4, 5]), ("b", &[5])], &mut rng);
    let report = grad_check(
        |g, s| -> Result<NodeId> {
            let (x, w, b) = (p(g, s, "x")?, p(g, s, "w")?, p(g, s, "b")?);
            let y = g.affine(x, w, b)?;
            readout(g, y, 10)
        },
        &s,
        tolerance,
        opts,
    )?;
    checks.push(LayerCheck { layer: "affine", report });

    for layer in ["sigmoid", "tanh", "relu"] {
        checks.push(pointwise_check(layer, &mut rng, tolerance, opts)?);
    }

    let s = random_store(&[("logits", &[5, 8])], &mut rng);
    let report = grad_check(
        |g, s| -> Result<NodeId> {
            let l = p(g, s, "logits")?;
            Ok(g.softmax_cross_entropy(l, &[0, 3, 7, 7, 2])?)
        },
        &s,
        tolerance,
        opts,
    )?;
    checks.push(LayerCheck { layer: "softmax_ce", report });

    let (b, i, n) = (3, 4, 5);
    let mut s = random_store(
        &[
            ("x", &[b, i]),
            ("h", &[b, n]),
            ("c", &[b, n]),
            ("wx", &[i, 4 * n]),
            ("wh", &[n, 4 * n]),
            ("b", &[4 * n]),
        ],
        &mut rng,
    );
    for v in &mut s.value_mut(s.require("b")?).data_mut()[n..2 * n] {
        *v += 3.0;
    }
    let report = grad_check(
        |g, s| -> Result<NodeId> {
            let w = LstmWeights {
                wx: p(g, s, "wx")?,
                wh: p(g, s, "wh")?,
                b: p(g, s, "b")?,
            };
            let x = p(g, s, "x")?;
            let (h, c) = (p(g, s, "h")?, p(g, s, "c")?);
            let (h, c) = lstm_cell(g, x, h, c, &w)?;
            let x2 = g.tanh(x)?;
            let (h, c) = lstm_cell(g, x2, h, c, &w)?;
            let rh = readout(g, h, 12)?;
            let rc = readout(g, c, 13)?;
            Ok(g.add(rh, rc)?)
        },
        &s,
        tolerance,
        opts,
    )?;
    checks.push(LayerCheck { layer: "lstm_cell", report });

    let s = random_store(
        &[
            ("x", &[b, i]),
            ("h", &[b, n]),
            ("wx", &[i, 3 * n]),
            ("wh_zr", &[n, 2 * n]),
            ("wh_n", &[n, n]),
            ("b", &[3 * n]),
        ],
        &mut rng,
    );
    let report = grad_check(
        |g, s| -> Result<NodeId> {
            let w = GruWeights {
                wx: p(g, s, "wx")?,
                wh_zr: p(g, s, "wh_zr")?,
                wh_n: p(g, s, "wh_n")?,
                b: p(g, s, "b")?,
            };
            let x = p(g, s, "x")?;
            let h = p(g, s, "h")?;
            let h = gru_cell(g, x, h, &w)?;
            let x2 = g.tanh(x)?;
            let h = gru_cell(g, x2, h, &w)?;
            readout(g, h, 14)
        },
        &s,
        tolerance,
        opts,
    )?;
    checks.push(LayerCheck { layer: "gru_cell", report });

    let s = random_store(&[("x", &[2, 4]), ("v", &[4, 3]), ("g", &[3])], &mut rng);
    let report = grad_check(
        |g, s| -> Result<NodeId> {
            let (v, gain) = (p(g, s, "v")?, p(g, s, "g")?);
            let w = g.weight_norm_apply(v, gain)?;
            let x = p(g, s, "x")?;
            let y = g.matmul(x, w)?;
            readout(g, y, 15)
        },
        &s,
        tolerance,
        opts,
    )?;
    checks.push(LayerCheck { layer: "weight_norm", report });

    let s = random_store(&[("table", &[10, 4])], &mut rng);
    let report = grad_check(
        |g, s| -> Result<NodeId> {
            let table = p(g, s, "table")?;
            let e = g.embedding(table, &[1, 3, 3, 9, 0, 1])?;
            readout(g, e, 16)
        },
        &s,
        tolerance,
        opts,
    )?;
    checks.push(LayerCheck { layer: "embedding", report });

    let fs = 3;
    let s = random_store(&[("top", &[2, n]), ("w", &[n, fs * n]), ("b", &[fs * n])], &mut rng);
    let report = grad_check(
        |g, s| -> Result<NodeId> {
            let (top, w, b) = (p(g, s, "top")?, p(g, s, "w")?, p(g, s, "b")?);
            let up = upsample(g, top, w, b, fs)?;
            readout(g, up, 17)
        },
        &s,
        tolerance,
        opts,
    )?;
    checks.push(LayerCheck { layer: "upsampler", report });

    let lstm = tiny_model(CellKind::Lstm, H0Mode::Learned, true, &mut rng)?;
    checks.push(model_check("model_lstm", &lstm, &mut rng, tolerance, opts)?);
    let gru = tiny_model(CellKind::Gru, H0Mode::Randomized, false, &mut rng)?;
    checks.push(model_check("model_gru", &gru, &mut rng, tolerance, opts)?);

    debug_assert!(checks.iter().map(|c| c.layer).eq(SUITE_LAYERS));
    Ok(SuiteReport { checks })
}
