//! Deterministic Mel-to-waveform synthesis used in place of a neural vocoder.

use ndarray::Array2;
use realfft::num_complex::Complex64;

use super::mel::{build_mel_filterbank, LogMelSpectrogram};
use super::stft::Stft;
use crate::audio::Waveform;
use crate::error::Result;

/// Default number of phase-recovery iterations.
pub const DEFAULT_ITERATIONS: usize = 32;

/// Peak level of synthesized waveforms.
pub const PEAK_LEVEL: f64 = 0.9;

/// Inverts a normalized log-Mel spectrogram to a waveform.
///
/// Normalization and log compression are undone with the utterance maximum
/// placed at 0 dB; entries at the floor (0) are treated as silence. Mel
/// energies are spread back onto linear bins with the filterbank
/// pseudo-inverse, and phase is recovered by `iterations` rounds of
/// Griffin-Lim alternating projection starting from zero phase. The output
/// has `N + (M - 1) H` samples and is peak-normalized to [`PEAK_LEVEL`]
/// unless it is silent.
pub fn mel_to_waveform(x: &LogMelSpectrogram, iterations: usize) -> Result<Waveform> {
    let cfg = x.config();
    let fb = build_mel_filterbank(cfg)?;
    let stft = Stft::new(cfg.stft)?;

    let span = cfg.norm_ceil_db - cfg.norm_floor_db;
    let db_per_decade = cfg.db_per_decade();
    let bands = x.values().mapv(|v| {
        if v <= 0.0 {
            0.0
        } else {
            let db = cfg.norm_floor_db + v as f64 * span;
            10f64.powf(db / db_per_decade)
        }
    });
    let linear = fb.pseudo_inverse(bands.view());
    let p = cfg.stft.power as f64;
    let magnitude: Array2<f64> = linear.mapv(|v| v.max(0.0).powf(1.0 / p));

    let len = cfg.stft.signal_len(x.num_frames());
    let samples = griffin_lim(&stft, &magnitude, len, iterations)?;

    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let gain = if peak > 1e-9 { PEAK_LEVEL / peak } else { 1.0 };
    let scaled: Vec<f64> = samples.iter().map(|s| s * gain).collect();
    Waveform::from_f64(&scaled, cfg.sample_rate)
}

/// Griffin-Lim phase recovery for a `frames × K` magnitude spectrogram.
pub fn griffin_lim(
    stft: &Stft,
    magnitude: &Array2<f64>,
    len: usize,
    iterations: usize,
) -> Result<Vec<f64>> {
    let mut spec = magnitude.mapv(|m| Complex64::new(m, 0.0));
    let mut rebuilt = spec.clone();
    if iterations > 0 && stft.config().num_frames(len) < spec.nrows() {
        return Err(crate::error::Error::InsufficientInput {
            needed: stft.config().signal_len(spec.nrows()),
            got: len,
        });
    }
    for _ in 0..iterations {
        let signal = stft.inverse(&spec, len);
        stft.forward_into(&signal, &mut rebuilt);
        for ((s, r), &m) in spec.iter_mut().zip(rebuilt.iter()).zip(magnitude.iter()) {
            let n = r.norm_sqr().sqrt();
            *s = if n > 1e-12 {
                r * (m / n)
            } else {
                Complex64::new(m, 0.0)
            };
        }
    }
    Ok(stft.inverse(&spec, len))
}
