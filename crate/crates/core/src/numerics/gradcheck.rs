//! Central finite-difference checks of analytic gradients.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Fault, Graph, NodeId, NumericsError, ParamStore};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Parameters with more coordinates than this are checked on a random subsample of this size.
    pub max_coords: usize,
    /// Denominator floor of the relative error, so that gradients that are
    /// zero up to rounding do not report huge relative errors.
    pub abs_floor: f64,
    pub seed: u64,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: 10_000,
            abs_floor: 1e-6,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamReport {
    pub name: String,
    pub coords_checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_err < self.tolerance)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.params {
            writeln!(
                f,
                "{:<28} coords={:<6} max_rel_err={:.3e} {}",
                p.name,
                p.coords_checked,
                p.max_rel_err,
                if p.max_rel_err < self.tolerance { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

fn evaluate<F, E>(f: &F, store: &ParamStore<f64>, fault: Option<Fault>) -> Result<f64, E>
where
    F: for<'a> Fn(&mut Graph<'a, f64>, &'a ParamStore<f64>) -> Result<NodeId, E>,
    E: From<NumericsError>,
{
    let mut g = Graph::new();
    g.inject_fault(fault);
    let loss = f(&mut g, store)?;
    let v = g.value(loss);
    if !v.is_scalar() {
        return Err(NumericsError::NonScalarLoss(v.shape().to_vec()).into());
    }
    Ok(v.data()[0])
}

/// Compares the tape gradient of the scalar returned by `f` with central
/// differences, coordinate by coordinate, for every parameter in `store`.
pub fn grad_check<F, E>(
    f: F,
    store: &ParamStore<f64>,
    tolerance: f64,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, E>
where
    F: for<'a> Fn(&mut Graph<'a, f64>, &'a ParamStore<f64>) -> Result<NodeId, E>,
    E: From<NumericsError>,
{
    let grads = {
        let mut g = Graph::new();
        g.inject_fault(opts.fault);
        let loss = f(&mut g, store)?;
        g.backward(loss)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = store.clone();
    let mut params = Vec::with_capacity(store.len());
    for id in store.ids() {
        let n = store.value(id).len();
        let coords: Vec<usize> = if n > opts.max_coords {
            rand::seq::index::sample(&mut rng, n, opts.max_coords).into_vec()
        } else {
            (0..n).collect()
        };
        let analytic = grads.get(id);
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for &c in &coords {
            let orig = store.value(id).data()[c];
            probe.value_mut(id).data_mut()[c] = orig + opts.step;
            let up = evaluate(&f, &probe, opts.fault)?;
            probe.value_mut(id).data_mut()[c] = orig - opts.step;
            let down = evaluate(&f, &probe, opts.fault)?;
            probe.value_mut(id).data_mut()[c] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            let a = analytic.map_or(0.0, |t| t.data()[c]);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(opts.abs_floor);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        params.push(ParamReport {
            name: store.name(id).to_string(),
            coords_checked: coords.len(),
            max_rel_err: max_rel,
            max_abs_err: max_abs,
        });
    }
    Ok(GradCheckReport { tolerance, params })
}
