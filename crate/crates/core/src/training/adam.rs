use crate::numerics::{lit, ParamStore, Real, Tensor};

/// Scales every accumulated gradient so the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Real>(params: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = {
        let (_, grads) = params.values_and_grads_mut();
        grads
            .iter()
            .flat_map(|g| g.data())
            .map(|&x| {
                let x = x.to_f64().unwrap_or(f64::NAN);
                x * x
            })
            .sum::<f64>()
            .sqrt()
    };
    if norm > max_norm {
        let s: T = lit(max_norm / norm);
        let (_, grads) = params.values_and_grads_mut();
        for g in grads {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

/// Bias-corrected Adam; moments are kept per parameter in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn matches(&self, params: &ParamStore<T>) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|((_, _, p), (m, v))| m.shape() == p.shape() && v.shape() == p.shape())
    }

    /// Applies one update from the store's gradient accumulators.
    pub fn update(&mut self, params: &mut ParamStore<T>, lr: f64, beta1: f64, beta2: f64, eps: f64) {
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let (b1, b2, e): (T, T, T) = (lit(beta1), lit(beta2), lit(eps));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let step: T = lit(lr / c1);
        let c2_sqrt: T = lit(c2.sqrt());
        let (values, grads) = params.values_and_grads_mut();
        for (((w, g), m), v) in values.iter_mut().zip(grads.iter()).zip(&mut self.m).zip(&mut self.v) {
            let ws = w.data_mut().iter_mut();
            for (((w, &g), m), v) in ws.zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                *w -= step * *m / ((*v).sqrt() / c2_sqrt + e);
            }
        }
    }
}
