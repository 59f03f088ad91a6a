use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioBuffer;
use crate::model::{H0Mode, ModelConfig, RecurrentState, SampleRnn};
use crate::numerics::{Graph, Tensor};

use super::{sample_categorical, GenConfig, GenError, Result};

/// Seeds of the `n_seq` sequences: `seed + k`.
pub fn sequence_seeds(cfg: &GenConfig) -> Vec<u64> {
    (0..cfg.n_seq as u64).map(|k| cfg.seed.wrapping_add(k)).collect()
}

/// Rough peak memory of a generation run: code history, output audio and one
/// frame step of activations per sequence.
pub fn memory_estimate_bytes(model: &ModelConfig, n_seq: usize, samples: usize) -> u64 {
    let h = model.hidden_dim as u64;
    let fs = model.frame_size as u64;
    let per_seq = (samples as u64 + fs) * 12
        + h * (model.n_layers as u64 * 16 + fs * 8) * 4
        + fs * (model.q_levels as u64 + model.embed_size as u64 * fs) * 8;
    per_seq * n_seq as u64
}

/// Generates one code sequence per seed. Every sequence is primed with
/// `frame_size` silence codes, has its own generator (which also draws its
/// initial state when h0 is randomized) and advances in lockstep with the others.
/// Each sequence depends only on its own seed, never on the batch around it.
pub fn generate_codes(model: &SampleRnn<f32>, cfg: &GenConfig, seeds: &[u64]) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(GenError::Config("no sequences requested".into()));
    }
    let n = seeds.len();
    let mc = model.config();
    let total = cfg.clip_samples(mc.sample_rate);
    let needed = memory_estimate_bytes(mc, n, total);
    if needed > cfg.memory_budget_mib.saturating_mul(1 << 20) {
        return Err(GenError::MemoryBudget {
            n_seq: n,
            needed_mib: needed.div_ceil(1 << 20),
            budget_mib: cfg.memory_budget_mib,
        });
    }
    let view = model.inference_view()?;
    let fs = mc.frame_size;
    let q = view.quantizer();
    let mut rngs: Vec<ChaCha8Rng> = seeds.iter().map(|&s| ChaCha8Rng::seed_from_u64(s)).collect();
    let mut state = match mc.h0_mode {
        H0Mode::Learned => None,
        H0Mode::Randomized => {
            let rows: Vec<RecurrentState<f32>> = rngs.iter_mut().map(|r| view.random_state(1, r)).collect();
            Some(RecurrentState::stack(&rows)?)
        }
    };
    let levels: Vec<f32> = (0..q.levels()).map(|c| q.dequantize(c).map(|x| x as f32)).collect::<Result<_, _>>()?;
    let mut hist: Vec<Vec<usize>> = vec![vec![q.silence(); fs]; n];
    for h in &mut hist {
        h.reserve(total + fs);
    }
    let steps = total.div_ceil(fs);
    for step in 0..steps {
        let mut g = Graph::new();
        let r = view.resolve(&mut g)?;
        let nodes = view.state_nodes(&mut g, &r, n, state.as_ref())?;
        let frame: Vec<f32> = hist
            .iter()
            .flat_map(|h| h[h.len() - fs..].iter().map(|&c| levels[c]))
            .collect();
        let x = g.constant(Tensor::new(&[n, fs], frame)?);
        let (cond, next) = view.frame_step(&mut g, &r, x, &nodes)?;
        for j in 0..fs {
            let rows: Vec<usize> = (0..n).map(|b| b * fs + j).collect();
            let c = g.embedding(cond, &rows)?;
            let windows: Vec<usize> = hist.iter().flat_map(|h| h[h.len() - fs..].iter().copied()).collect();
            let logits = view.sample_tier_forward(&mut g, &r, &windows, c)?;
            let values = g.value(logits);
            for (b, h) in hist.iter_mut().enumerate() {
                let code = sample_categorical(values.row(b), cfg.temperature, cfg.mode, &mut rngs[b]).map_err(|e| {
                    match e {
                        GenError::Model(_) => GenError::NonFinite { step: step * fs + j },
                        e => e,
                    }
                })?;
                h.push(code);
            }
        }
        state = Some(next.detach(&g));
    }
    Ok(hist.into_iter().map(|h| h[fs..fs + total].to_vec()).collect())
}

/// `n_seq` clips of exactly `clip_seconds · sample_rate` samples.
pub fn generate_batch(model: &SampleRnn<f32>, cfg: &GenConfig) -> Result<Vec<AudioBuffer>> {
    let q = model.quantizer();
    let sr = model.config().sample_rate;
    generate_codes(model, cfg, &sequence_seeds(cfg))?
        .into_iter()
        .map(|codes| Ok(AudioBuffer::new(q.dequantize_all(&codes)?, sr)?))
        .collect()
}
