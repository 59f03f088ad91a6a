use std::fmt;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;

use super::{GenConfig, GenError, Result};

/// Window length of the averaged power spectrum behind [`spectral_flatness`].
pub const FLATNESS_WINDOW: usize = 2048;
/// Window and hop of the energy envelope behind [`detect_loop_trap`].
pub const ENVELOPE_WINDOW: usize = 1024;
pub const ENVELOPE_HOP: usize = 256;
/// Envelopes whose relative spread is below this carry no figure that could repeat.
const STEADY_ENVELOPE: f64 = 1e-2;
const LAG_TIE: f64 = 1e-6;

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Geometric over arithmetic mean of the power spectrum, averaged over Hann
/// windows of 2048 samples with 50% overlap. The DC and Nyquist bins are left
/// out. About 1 for white noise, near 0 for tones; an all-zero clip gives 0.
pub fn spectral_flatness(clip: &AudioBuffer) -> Result<f64> {
    let x = clip.samples();
    let n = FLATNESS_WINDOW;
    if x.len() < n {
        return Err(GenError::TooShort {
            len: x.len(),
            min: n,
            what: "spectral flatness",
        });
    }
    let window = hann(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut power = vec![0.0f64; n / 2 + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut frames = 0usize;
    let mut start = 0;
    while start + n <= x.len() {
        for (b, (&s, &w)) in buf.iter_mut().zip(x[start..start + n].iter().zip(&window)) {
            *b = Complex::new(s as f64 * w, 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
        frames += 1;
        start += n / 2;
    }
    let bins = &power[1..n / 2];
    let arith = bins.iter().sum::<f64>() / (bins.len() * frames) as f64;
    if arith <= f64::MIN_POSITIVE {
        return Ok(0.0);
    }
    let floor = arith * 1e-300;
    let log_mean = bins
        .iter()
        .map(|&p| (p / frames as f64).max(floor).ln())
        .sum::<f64>()
        / bins.len() as f64;
    Ok((log_mean.exp() / arith).clamp(0.0, 1.0))
}

/// RMS of the mean-removed clip over Hann windows.
fn envelope(clip: &AudioBuffer) -> Vec<f64> {
    let x = clip.samples();
    let mean = x.iter().map(|&s| s as f64).sum::<f64>() / x.len() as f64;
    let w = hann(ENVELOPE_WINDOW);
    let norm: f64 = w.iter().map(|v| v * v).sum();
    let mut out = Vec::new();
    let mut start = 0;
    while start + ENVELOPE_WINDOW <= x.len() {
        let e: f64 = x[start..start + ENVELOPE_WINDOW]
            .iter()
            .zip(&w)
            .map(|(&s, &wi)| {
                let v = (s as f64 - mean) * wi;
                v * v
            })
            .sum();
        out.push((e / norm).sqrt());
        start += ENVELOPE_HOP;
    }
    out
}

/// Largest normalized autocorrelation of the clip's energy envelope over lags
/// in `[min_lag, max_lag]` seconds, and the lag where it occurs.
///
/// The envelope is the RMS of the mean-removed signal over 1024-sample Hann
/// windows every 256 samples, so lags resolve to one hop. Each lag is
/// normalized by the energies of the two overlapping parts, which makes an
/// exactly repeated figure score 1 at its period; ties go to the shortest lag.
/// Constant, silent or steady-envelope clips (a sustained tone) score 0 at lag 0.
pub fn detect_loop_trap(clip: &AudioBuffer, min_lag: f64, max_lag: f64) -> Result<(f64, f64)> {
    let sr = clip.sample_rate() as f64;
    let duration = clip.duration_secs();
    if !(min_lag > 0.0 && min_lag < max_lag && max_lag < duration / 2.0) {
        return Err(GenError::LagWindow {
            min_lag,
            max_lag,
            duration,
        });
    }
    let env = envelope(clip);
    let hop_s = ENVELOPE_HOP as f64 / sr;
    let lo = (min_lag / hop_s).ceil() as usize;
    let hi = ((max_lag / hop_s).floor() as usize).min(env.len().saturating_sub(2));
    if env.len() < 4 || lo > hi {
        return Err(GenError::TooShort {
            len: clip.len(),
            min: ENVELOPE_WINDOW + ENVELOPE_HOP * (lo + 2),
            what: "loop detection",
        });
    }
    let mean = env.iter().sum::<f64>() / env.len() as f64;
    let a: Vec<f64> = env.iter().map(|e| e - mean).collect();
    let spread = (a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64).sqrt();
    if mean <= 0.0 || spread <= STEADY_ENVELOPE * mean {
        return Ok((0.0, 0.0));
    }
    // prefix sums of squares give the energy of any overlap in O(1)
    let mut sq = vec![0.0f64; a.len() + 1];
    for (i, v) in a.iter().enumerate() {
        sq[i + 1] = sq[i] + v * v;
    }
    let n = a.len();
    let (mut best, mut best_lag) = (f64::NEG_INFINITY, 0usize);
    for lag in lo..=hi {
        let num: f64 = a[..n - lag].iter().zip(&a[lag..]).map(|(x, y)| x * y).sum();
        let den = (sq[n - lag] * (sq[n] - sq[lag])).sqrt();
        let r = if den > 0.0 { (num / den).clamp(-1.0, 1.0) } else { 0.0 };
        if r > best + LAG_TIE {
            best = r;
            best_lag = lag;
        }
    }
    Ok((best, best_lag as f64 * hop_s))
}

/// Per-clip diagnostics line.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub clip: String,
    pub flatness: f64,
    pub ac_peak: f64,
    pub ac_lag_s: f64,
    pub white_noise_suspect: bool,
    pub trap_suspect: bool,
}

impl DiagnosticsReport {
    pub fn flags(&self) -> Vec<&'static str> {
        let mut f = Vec::new();
        if self.white_noise_suspect {
            f.push("white_noise_suspect");
        }
        if self.trap_suspect {
            f.push("trap_suspect");
        }
        f
    }
}

impl fmt::Display for DiagnosticsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flags = self.flags();
        write!(
            f,
            "clip={} flatness={:.4} ac_peak={:.4} ac_lag_s={:.3} flags={}",
            self.clip,
            self.flatness,
            self.ac_peak,
            self.ac_lag_s,
            if flags.is_empty() { "none".to_string() } else { flags.join(",") }
        )
    }
}

/// Runs both detectors with the thresholds of `cfg`. When the clip is too short
/// for the configured lag window, the window shrinks to fit; a clip too short
/// for any window gets no loop score.
pub fn diagnose(name: &str, clip: &AudioBuffer, cfg: &GenConfig) -> Result<DiagnosticsReport> {
    let flatness = spectral_flatness(clip)?;
    let half = clip.duration_secs() / 2.0;
    let hop_s = ENVELOPE_HOP as f64 / clip.sample_rate() as f64;
    let max_lag = cfg.max_lag_s.min(half - hop_s);
    let (ac_peak, ac_lag_s) = if max_lag > cfg.min_lag_s {
        match detect_loop_trap(clip, cfg.min_lag_s, max_lag) {
            Ok(v) => v,
            Err(GenError::TooShort { .. }) => (0.0, 0.0),
            Err(e) => return Err(e),
        }
    } else {
        (0.0, 0.0)
    };
    Ok(DiagnosticsReport {
        clip: name.to_string(),
        flatness,
        ac_peak,
        ac_lag_s,
        white_noise_suspect: flatness > cfg.flatness_threshold,
        trap_suspect: ac_peak > cfg.trap_threshold,
    })
}
