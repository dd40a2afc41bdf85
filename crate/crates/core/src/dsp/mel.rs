use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::stft::{Stft, StftConfig};
use crate::audio::Waveform;
use crate::error::{Error, Result};

/// HTK-style Mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub num_bands: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub epsilon: f64,
    /// dB below the per-utterance maximum that maps to 0.
    pub norm_floor_db: f64,
    /// dB relative to the per-utterance maximum that maps to 1.
    pub norm_ceil_db: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self::for_sample_rate(22050)
    }
}

impl MelConfig {
    /// Default front end (80 bands, 20 Hz to Nyquist) at the given rate.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        Self {
            num_bands: 80,
            f_min: 20.0,
            f_max: sample_rate as f64 / 2.0,
            sample_rate,
            stft: StftConfig::default(),
            epsilon: 1e-10,
            norm_floor_db: -80.0,
            norm_ceil_db: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if self.num_bands == 0 {
            return Err(Error::InvalidConfig("need at least one mel band".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= nyquist) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= f_min < f_max <= {nyquist}, got {}..{}",
                self.f_min, self.f_max
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if self.norm_floor_db.is_nan() || self.norm_ceil_db.is_nan() || self.norm_floor_db >= self.norm_ceil_db {
            return Err(Error::InvalidConfig("norm floor must lie below norm ceiling".into()));
        }
        Ok(())
    }

    /// dB per decade of the filterbank output: 10 for power, 20 for magnitude.
    pub fn db_per_decade(&self) -> f64 {
        20.0 / self.stft.power as f64
    }
}

/// Triangular Mel filters over the one-sided linear spectrum.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    /// Nonzero column range of each row.
    spans: Vec<(usize, usize)>,
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    /// `C × K` weight matrix.
    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    /// The `C + 2` filter edge frequencies; filter `c` rises from
    /// `edges[c]`, peaks at `edges[c + 1]` and falls to `edges[c + 2]`.
    pub fn edges_hz(&self) -> &[f64] {
        &self.edges_hz
    }

    pub fn num_bands(&self) -> usize {
        self.weights.nrows()
    }

    /// Projects a `frames × K` spectrum onto the filters, giving `C × frames`.
    pub fn apply(&self, spectrum: ArrayView2<'_, f64>) -> Array2<f64> {
        let frames = spectrum.nrows();
        let mut out = Array2::zeros((self.num_bands(), frames));
        for (c, &(lo, hi)) in self.spans.iter().enumerate() {
            let w = &self.weights.row(c);
            for t in 0..frames {
                let row = spectrum.row(t);
                let mut acc = 0.0;
                for k in lo..hi {
                    acc += w[k] * row[k];
                }
                out[[c, t]] = acc;
            }
        }
        out
    }

    /// Pseudo-inverse projection from `C × frames` band energies back onto
    /// linear bins (`frames × K`): the filterbank transpose, with each bin
    /// divided by its total filter weight so it takes the weighted mean of
    /// the bands covering it. Negative values are clamped to zero; bins no
    /// filter covers stay zero.
    pub fn pseudo_inverse(&self, bands: ArrayView2<'_, f64>) -> Array2<f64> {
        let bins = self.weights.ncols();
        let frames = bands.ncols();
        let col_sums: Vec<f64> = self.weights.columns().into_iter().map(|c| c.sum()).collect();
        let mut out = Array2::zeros((frames, bins));
        for (c, &(lo, hi)) in self.spans.iter().enumerate() {
            let w = self.weights.row(c);
            for t in 0..frames {
                let v = bands[[c, t]].max(0.0);
                for k in lo..hi {
                    out[[t, k]] += w[k] * v;
                }
            }
        }
        for mut row in out.rows_mut() {
            for (v, &s) in row.iter_mut().zip(&col_sums) {
                *v = if s > 0.0 { *v / s } else { 0.0 };
            }
        }
        out
    }
}

/// Builds `C` triangular filters with edges equally spaced on the Mel scale
/// between `f_min` and `f_max`. Each row is scaled to a peak weight of 1.
pub fn build_mel_filterbank(cfg: &MelConfig) -> Result<MelFilterbank> {
    cfg.validate()?;
    let c = cfg.num_bands;
    let bins = cfg.stft.num_bins();
    let m_lo = hz_to_mel(cfg.f_min);
    let m_hi = hz_to_mel(cfg.f_max);
    let step = (m_hi - m_lo) / (c + 1) as f64;
    let edges_hz: Vec<f64> = (0..c + 2)
        .map(|i| mel_to_hz(m_lo + step * i as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.stft.fft_size as f64;

    let mut weights = Array2::zeros((c, bins));
    let mut spans = Vec::with_capacity(c);
    for band in 0..c {
        let (lo, mid, hi) = (edges_hz[band], edges_hz[band + 1], edges_hz[band + 2]);
        let mut row = weights.row_mut(band);
        let mut span = (usize::MAX, 0);
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f < hi {
                if f <= mid {
                    (f - lo) / (mid - lo)
                } else {
                    (hi - f) / (hi - mid)
                }
            } else {
                0.0
            };
            if w > 0.0 {
                row[k] = w;
                span.0 = span.0.min(k);
                span.1 = k + 1;
            }
        }
        let peak = row.fold(0.0f64, |m, &v| m.max(v));
        if peak <= 0.0 {
            return Err(Error::DegenerateFilter { band });
        }
        row.mapv_inplace(|v| v / peak);
        spans.push(span);
    }
    Ok(MelFilterbank {
        weights,
        spans,
        edges_hz,
    })
}

/// Normalized log-Mel spectrogram: `C × M` values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    values: Array2<f32>,
    config: MelConfig,
}

impl LogMelSpectrogram {
    pub fn new(values: Array2<f32>, config: MelConfig) -> Result<Self> {
        config.validate()?;
        if values.nrows() != config.num_bands {
            return Err(Error::LengthMismatch {
                expected: config.num_bands,
                got: values.nrows(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!(
                "log-mel value {v} outside [0, 1]"
            )));
        }
        Ok(Self { values, config })
    }

    pub fn values(&self) -> ArrayView2<'_, f32> {
        self.values.view()
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn num_bands(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_values(self) -> Array2<f32> {
        self.values
    }
}

/// Filterbank output before log compression, `C × M`.
pub fn mel_energies(w: &Waveform, cfg: &MelConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    if w.sample_rate() != cfg.sample_rate {
        return Err(Error::SampleRateMismatch {
            expected: cfg.sample_rate,
            got: w.sample_rate(),
        });
    }
    let fb = build_mel_filterbank(cfg)?;
    let spec = Stft::new(cfg.stft)?.forward(&w.to_f64())?;
    let p = cfg.stft.power;
    let power = spec.mapv(|z| if p == 2 { z.norm_sqr() } else { z.norm_sqr().sqrt() });
    Ok(fb.apply(power.view()))
}

/// Natural-log compression `ln(X + ε)` of the filterbank output, before
/// normalization.
pub fn log_mel_raw(w: &Waveform, cfg: &MelConfig) -> Result<Array2<f64>> {
    Ok(mel_energies(w, cfg)?.mapv(|x| (x + cfg.epsilon).ln()))
}

/// Maps natural-log Mel energies onto `[0, 1]`: values are expressed in dB
/// relative to the utterance maximum and the `[floor, ceil]` window is
/// mapped affinely onto `[0, 1]` with clamping. The reference level never
/// sits less than `|floor|` dB above the ε level, so silence maps to 0.
pub fn normalize_log_mel(raw: &Array2<f64>, cfg: &MelConfig) -> Array2<f32> {
    let to_db = cfg.db_per_decade() / std::f64::consts::LN_10;
    let eps_db = to_db * cfg.epsilon.ln();
    let max_db = raw.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v * to_db));
    let reference = max_db.max(eps_db - cfg.norm_floor_db);
    let span = cfg.norm_ceil_db - cfg.norm_floor_db;
    raw.mapv(|v| {
        let rel = v * to_db - reference;
        ((rel - cfg.norm_floor_db) / span).clamp(0.0, 1.0) as f32
    })
}

/// STFT, Mel projection, log compression and normalization.
pub fn mel_spectrogram(w: &Waveform, cfg: &MelConfig) -> Result<LogMelSpectrogram> {
    let raw = log_mel_raw(w, cfg)?;
    LogMelSpectrogram::new(normalize_log_mel(&raw, cfg), *cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn white_noise(len: usize, seed: u64) -> Vec<f32> {
        let mut s = seed;
        (0..len)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (((s >> 11) as f64 / (1u64 << 53) as f64) * 0.8 - 0.4) as f32
            })
            .collect()
    }

    #[test]
    fn mel_scale_round_trip() {
        for f in [0.0, 20.0, 700.0, 1000.0, 11025.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn single_band_spans_range_with_unit_peak_at_midpoint() {
        let cfg = MelConfig {
            num_bands: 1,
            ..MelConfig::default()
        };
        let fb = build_mel_filterbank(&cfg).unwrap();
        let w = fb.weights();
        let edges = fb.edges_hz();
        assert!((edges[0] - 20.0).abs() < 1e-9);
        assert!((edges[2] - 11025.0).abs() < 1e-6);
        let mid_hz = mel_to_hz((hz_to_mel(20.0) + hz_to_mel(11025.0)) / 2.0);
        let bin_hz = 22050.0 / 1024.0;
        let below = (mid_hz / bin_hz).floor() as usize;
        let (argmax, peak) = w
            .row(0)
            .iter()
            .enumerate()
            .fold((0, 0.0), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        assert_eq!(peak, 1.0);
        // Asymmetric slopes: the peak lands on one of the two bins that
        // bracket the Mel midpoint.
        assert!(argmax == below || argmax == below + 1, "{argmax} vs {below}");
        for k in 0..w.ncols() {
            let f = k as f64 * bin_hz;
            if f > 20.0 && f < 11025.0 {
                assert!(w[[0, k]] > 0.0);
            } else {
                assert_eq!(w[[0, k]], 0.0);
            }
        }
    }

    #[test]
    fn too_many_bands_is_degenerate() {
        let mut cfg = MelConfig::default();
        cfg.stft.fft_size = 64;
        cfg.stft.hop = 16;
        cfg.num_bands = 80;
        assert!(matches!(
            build_mel_filterbank(&cfg),
            Err(Error::DegenerateFilter { .. })
        ));
    }

    #[test]
    fn filters_cover_interior_and_centers_increase() {
        let cfg = MelConfig::default();
        let fb = build_mel_filterbank(&cfg).unwrap();
        let w = fb.weights();
        let bin_hz = 22050.0 / 1024.0;
        for k in 0..w.ncols() {
            let f = k as f64 * bin_hz;
            if f > cfg.f_min && f < cfg.f_max {
                assert!(w.column(k).sum() > 0.0, "bin {k} uncovered");
            }
        }
        assert!(fb.edges_hz().windows(2).all(|p| p[1] > p[0]));
        for row in w.rows() {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!(row.iter().any(|&v| v > 0.0));
        }
    }

    #[test]
    fn zero_waveform_maps_to_floor() {
        let cfg = MelConfig::default();
        let w = Waveform::silence(22050, 22050).unwrap();
        let x = mel_spectrogram(&w, &cfg).unwrap();
        assert_eq!(x.num_bands(), 80);
        assert_eq!(x.num_frames(), cfg.stft.num_frames(22050));
        assert!(x.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gain_shifts_raw_log_mel_uniformly() {
        let cfg = MelConfig::default();
        let noise = white_noise(22050, 9);
        let a = Waveform::new(noise.clone(), 22050).unwrap();
        let b = Waveform::new(noise.iter().map(|s| s * 2.0).collect(), 22050).unwrap();
        let ra = log_mel_raw(&a, &cfg).unwrap();
        let rb = log_mel_raw(&b, &cfg).unwrap();
        let shift = 4f64.ln();
        for (x, y) in ra.iter().zip(rb.iter()) {
            // Only bins well above ε; white noise fills every band.
            assert!(x.exp() > 1e3 * cfg.epsilon);
            assert!((y - x - shift).abs() <= 1e-6, "{x} {y}");
        }
    }

    #[test]
    fn rejects_sample_rate_mismatch() {
        let cfg = MelConfig::default();
        let w = Waveform::silence(22050, 16000).unwrap();
        assert!(matches!(
            mel_spectrogram(&w, &cfg),
            Err(Error::SampleRateMismatch { .. })
        ));
    }

    #[test]
    fn normalization_is_monotone_per_entry() {
        let cfg = MelConfig::default();
        let raw = Array2::from_shape_fn((4, 5), |(c, t)| ((c * 5 + t) as f64 * 0.7).sin() * 3.0);
        let base = normalize_log_mel(&raw, &cfg);
        for idx in [(0, 0), (2, 3), (3, 4)] {
            for bump in [0.01, 1.0, 10.0] {
                let mut r = raw.clone();
                r[idx] += bump;
                let n = normalize_log_mel(&r, &cfg);
                assert!(n[idx] >= base[idx]);
            }
        }
    }
}
