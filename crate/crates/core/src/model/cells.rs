use crate::numerics::{Graph, NodeId, NumericsError, Real};

use super::Result;

/// Graph nodes of one LSTM layer. Gate blocks are ordered (input, forget, cell, output)
/// along the columns of `wx` (`[in × 4H]`), `wh` (`[H × 4H]`) and `b` (`[4H]`).
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub wx: NodeId,
    pub wh: NodeId,
    pub b: NodeId,
}

/// Graph nodes of one GRU layer. `wx` is `[in × 3H]` with blocks (update, reset, candidate);
/// `wh_zr` is `[H × 2H]`, `wh_n` is `[H × H]`, `b` is `[3H]`.
#[derive(Debug, Clone, Copy)]
pub struct GruWeights {
    pub wx: NodeId,
    pub wh_zr: NodeId,
    pub wh_n: NodeId,
    pub b: NodeId,
}

fn hidden_of<T: Real>(g: &Graph<'_, T>, h: NodeId) -> Result<usize> {
    match g.shape(h) {
        [_, n] => Ok(*n),
        s => Err(NumericsError::Shape(format!("recurrent state must be [batch × hidden], got {s:?}")).into()),
    }
}

/// One LSTM step: returns `(h′, c′)`.
pub fn lstm_cell<T: Real>(
    g: &mut Graph<'_, T>,
    x: NodeId,
    h: NodeId,
    c: NodeId,
    w: &LstmWeights,
) -> Result<(NodeId, NodeId)> {
    let n = hidden_of(g, h)?;
    let px = g.affine(x, w.wx, w.b)?;
    let ph = g.matmul(h, w.wh)?;
    let pre = g.add(px, ph)?;
    let i = g.slice_cols(pre, 0, n)?;
    let f = g.slice_cols(pre, n, n)?;
    let cand = g.slice_cols(pre, 2 * n, n)?;
    let o = g.slice_cols(pre, 3 * n, n)?;
    let i = g.sigmoid(i)?;
    let f = g.sigmoid(f)?;
    let cand = g.tanh(cand)?;
    let o = g.sigmoid(o)?;
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next)?;
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// One GRU step: `h′ = (1 − z)⊙h + z⊙h̃` with `h̃ = tanh(x·Wn + (r⊙h)·Un + bn)`.
pub fn gru_cell<T: Real>(g: &mut Graph<'_, T>, x: NodeId, h: NodeId, w: &GruWeights) -> Result<NodeId> {
    let n = hidden_of(g, h)?;
    let px = g.affine(x, w.wx, w.b)?;
    let px_zr = g.slice_cols(px, 0, 2 * n)?;
    let px_n = g.slice_cols(px, 2 * n, n)?;
    let ph_zr = g.matmul(h, w.wh_zr)?;
    let zr = g.add(px_zr, ph_zr)?;
    let z = g.slice_cols(zr, 0, n)?;
    let r = g.slice_cols(zr, n, n)?;
    let z = g.sigmoid(z)?;
    let r = g.sigmoid(r)?;
    let rh = g.mul(r, h)?;
    let ph_n = g.matmul(rh, w.wh_n)?;
    let cand = g.add(px_n, ph_n)?;
    let cand = g.tanh(cand)?;
    let delta = g.sub(cand, h)?;
    let step = g.mul(z, delta)?;
    Ok(g.add(h, step)?)
}

/// Upsamples `[B × H]` frame outputs to `[B·frame_size × H]` conditioning rows
/// with `frame_size` independent linear maps, held side by side in `w` (`[H × frame_size·H]`).
pub fn upsample<T: Real>(g: &mut Graph<'_, T>, top: NodeId, w: NodeId, b: NodeId, frame_size: usize) -> Result<NodeId> {
    let (batch, n) = match g.shape(top) {
        [b, n] => (*b, *n),
        s => return Err(NumericsError::Shape(format!("upsampler input must be [batch × hidden], got {s:?}")).into()),
    };
    let up = g.affine(top, w, b)?;
    Ok(g.reshape(up, &[batch * frame_size, n])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn consts<T: Real>(g: &mut Graph<'_, T>, shapes: &[&[usize]]) -> Vec<NodeId> {
        shapes.iter().map(|s| g.constant(Tensor::zeros(s))).collect()
    }

    #[test]
    fn lstm_forget_gate_with_bias_three() {
        let (b, i, n) = (2, 3, 4);
        let mut g = Graph::<f64>::new();
        let ids = consts(&mut g, &[&[b, i], &[b, n], &[b, n], &[i, 4 * n], &[n, 4 * n]]);
        let mut bias = vec![0.0; 4 * n];
        bias[n..2 * n].iter_mut().for_each(|v| *v = 3.0);
        let bias = g.constant(Tensor::vector(bias));
        let w = LstmWeights {
            wx: ids[3],
            wh: ids[4],
            b: bias,
        };
        let (h, c) = lstm_cell(&mut g, ids[0], ids[1], ids[2], &w).unwrap();
        // with c = 0 the forget gate has nothing to keep and i = 0.5, g = tanh(0) = 0
        assert!(g.value(h).data().iter().all(|&v| v == 0.0));
        assert!(g.value(c).data().iter().all(|&v| v == 0.0));

        // pre-activations are laid out (i, f, g, o); read the forget gate off the
        // cell update with c = 1 and no write: c' = f.
        let ones = g.constant(Tensor::filled(&[b, n], 1.0));
        let (_, c) = lstm_cell(&mut g, ids[0], ids[1], ones, &w).unwrap();
        let want = 1.0 / (1.0 + (-3.0f64).exp());
        assert!(g.value(c).data().iter().all(|&v| (v - want).abs() < 1e-15));
        assert!((want - 0.9526).abs() < 1e-4);
    }

    #[test]
    fn lstm_all_zero_gives_zero() {
        let mut g = Graph::<f32>::new();
        let ids = consts(&mut g, &[&[1, 2], &[1, 3], &[1, 3], &[2, 12], &[3, 12], &[12]]);
        let w = LstmWeights {
            wx: ids[3],
            wh: ids[4],
            b: ids[5],
        };
        let (h, c) = lstm_cell(&mut g, ids[0], ids[1], ids[2], &w).unwrap();
        assert!(g.value(h).data().iter().chain(g.value(c).data()).all(|&v| v == 0.0));
    }

    #[test]
    fn gru_carries_state_when_update_gate_is_closed() {
        let (i, n) = (2, 3);
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new(&[1, i], vec![0.3, -0.7]).unwrap());
        let h = g.constant(Tensor::new(&[1, n], vec![0.5, -0.25, 0.125]).unwrap());
        let wx = g.constant(Tensor::filled(&[i, 3 * n], 0.2));
        let wh_zr = g.constant(Tensor::filled(&[n, 2 * n], 0.1));
        let wh_n = g.constant(Tensor::filled(&[n, n], -0.3));
        let mut bias = vec![0.0; 3 * n];
        bias[..n].iter_mut().for_each(|v| *v = -1e3);
        let b = g.constant(Tensor::vector(bias));
        let h2 = gru_cell(&mut g, x, h, &GruWeights { wx, wh_zr, wh_n, b }).unwrap();
        assert_eq!(g.value(h2).data(), g.value(h).data());
    }

    #[test]
    fn gru_all_zero_gives_zero() {
        let mut g = Graph::<f64>::new();
        let ids = consts(&mut g, &[&[1, 2], &[1, 3], &[2, 9], &[3, 6], &[3, 3], &[9]]);
        let w = GruWeights {
            wx: ids[2],
            wh_zr: ids[3],
            wh_n: ids[4],
            b: ids[5],
        };
        let h = gru_cell(&mut g, ids[0], ids[1], &w).unwrap();
        assert!(g.value(h).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut g = Graph::<f64>::new();
        let ids = consts(&mut g, &[&[1, 2], &[1, 3], &[1, 3], &[5, 12], &[3, 12], &[12]]);
        let w = LstmWeights {
            wx: ids[3],
            wh: ids[4],
            b: ids[5],
        };
        assert!(lstm_cell(&mut g, ids[0], ids[1], ids[2], &w).is_err());
    }
}
