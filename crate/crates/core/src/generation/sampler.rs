use rand::Rng;

use crate::numerics::{NumericsError, Real};

use super::{GenError, Result, SampleMode};

/// Draws one code from `softmax(logits / temperature)` by inverse CDF, or
/// returns the first maximal index in argmax mode (no random draw is consumed).
pub fn sample_categorical<T: Real, R: Rng + ?Sized>(
    logits: &[T],
    temperature: f64,
    mode: SampleMode,
    rng: &mut R,
) -> Result<usize> {
    if logits.is_empty() {
        return Err(NumericsError::Shape("empty logits".into()).into());
    }
    let mut best = 0;
    let mut max = f64::NEG_INFINITY;
    for (i, &l) in logits.iter().enumerate() {
        let l = l.to_f64().unwrap_or(f64::NAN);
        if !l.is_finite() {
            return Err(NumericsError::NonFinite("logits").into());
        }
        if l > max {
            max = l;
            best = i;
        }
    }
    if mode == SampleMode::Argmax {
        return Ok(best);
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(GenError::Config(format!("temperature must be positive, got {temperature}")));
    }
    let weights: Vec<f64> = logits
        .iter()
        .map(|&l| ((l.to_f64().unwrap_or(0.0) - max) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(i);
        }
    }
    // rounding left u at the very top of the range: take the last code with mass
    Ok(weights.iter().rposition(|&w| w > 0.0).unwrap_or(best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn argmax_takes_the_first_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_categorical(&[1.0f32, 3.0, 3.0], 1.0, SampleMode::Argmax, &mut rng).unwrap(), 1);
    }

    #[test]
    fn argmax_ignores_scale_and_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let logits: Vec<f64> = (0..16).map(|_| rng.random_range(-4.0..4.0)).collect();
            let want = sample_categorical(&logits, 1.0, SampleMode::Argmax, &mut rng).unwrap();
            let moved: Vec<f64> = logits.iter().map(|l| l * 0.37 + 12.5).collect();
            assert_eq!(sample_categorical(&moved, 0.1, SampleMode::Argmax, &mut rng).unwrap(), want);
        }
    }

    #[test]
    fn rejects_non_finite_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_categorical(&[0.0f32, f32::NAN], 1.0, SampleMode::Softmax, &mut rng).is_err());
        assert!(sample_categorical(&[0.0f32, f32::INFINITY], 1.0, SampleMode::Argmax, &mut rng).is_err());
    }

    #[test]
    fn point_mass_is_always_drawn() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let logits = [-1e4f32, 0.0, -1e4];
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&logits, 1.0, SampleMode::Softmax, &mut rng).unwrap(), 1);
        }
    }
}
