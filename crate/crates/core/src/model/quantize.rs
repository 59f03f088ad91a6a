use super::{ModelError, Result};

/// Equal-width quantization of [-1, 1] into `levels` bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantizer {
    levels: usize,
}

impl Quantizer {
    pub fn new(levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(ModelError::Config(format!("q_levels must be >= 2, got {levels}")));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// `clamp(floor((x + 1) / 2 * levels), 0, levels - 1)` after clamping `x` to [-1, 1].
    pub fn quantize(&self, x: f64) -> usize {
        let x = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
        let code = ((x + 1.0) / 2.0 * self.levels as f64).floor();
        (code.max(0.0) as usize).min(self.levels - 1)
    }

    /// Bin midpoint `2 (code + 0.5) / levels - 1`.
    pub fn dequantize(&self, code: usize) -> Result<f64> {
        if code >= self.levels {
            return Err(ModelError::CodeOutOfRange {
                code,
                levels: self.levels,
            });
        }
        Ok(2.0 * (code as f64 + 0.5) / self.levels as f64 - 1.0)
    }

    pub fn silence(&self) -> usize {
        self.quantize(0.0)
    }

    pub fn quantize_all(&self, xs: &[f32]) -> Vec<usize> {
        xs.iter().map(|&x| self.quantize(x as f64)).collect()
    }

    pub fn dequantize_all(&self, codes: &[usize]) -> Result<Vec<f32>> {
        codes.iter().map(|&c| self.dequantize(c).map(|x| x as f32)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_and_midpoint() {
        let q = Quantizer::new(256).unwrap();
        assert_eq!(q.quantize(-1.0), 0);
        assert_eq!(q.quantize(0.0), 128);
        assert_eq!(q.quantize(1.0), 255);
        assert_eq!(q.quantize(7.0), 255);
        assert_eq!(q.quantize(-7.0), 0);
        assert_eq!(q.dequantize(0).unwrap(), -0.99609375);
        assert_eq!(q.dequantize(255).unwrap(), 0.99609375);
        assert!(matches!(q.dequantize(256), Err(ModelError::CodeOutOfRange { .. })));
        assert!(Quantizer::new(1).is_err());
    }

    #[test]
    fn every_code_is_stable() {
        let q = Quantizer::new(256).unwrap();
        for c in 0..256 {
            assert_eq!(q.quantize(q.dequantize(c).unwrap()), c);
        }
    }
}
