use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
    Hamming,
}

impl WindowKind {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let (a0, a1) = match self {
            WindowKind::Hann => (0.5, 0.5),
            WindowKind::Hamming => (0.54, 0.46),
        };
        (0..n)
            .map(|i| a0 - a1 * (2.0 * PI * i as f64 / n as f64).cos())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
    /// Exponent applied to the magnitude spectrum (1 = magnitude, 2 = power).
    pub power: u8,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            hop: 256,
            window: WindowKind::Hann,
            power: 2,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || !self.fft_size.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "fft size {} is not a power of two",
                self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "hop {} must be in 1..={}",
                self.hop, self.fft_size
            )));
        }
        if !matches!(self.power, 1 | 2) {
            return Err(Error::InvalidConfig(format!(
                "power exponent {} must be 1 or 2",
                self.power
            )));
        }
        Ok(())
    }

    /// Number of one-sided frequency bins, `N/2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of full frames in a signal of `len` samples (no padding).
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.fft_size {
            0
        } else {
            (len - self.fft_size) / self.hop + 1
        }
    }

    /// Signal length that yields exactly `frames` frames.
    pub fn signal_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            self.fft_size + (frames - 1) * self.hop
        }
    }
}

/// Planned forward/inverse short-time Fourier transform.
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Self {
            window: cfg.window.coefficients(cfg.fft_size),
            forward: planner.plan_fft_forward(cfg.fft_size),
            inverse: planner.plan_fft_inverse(cfg.fft_size),
            cfg,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Windowed DFT of every full frame, shape `frames × (N/2 + 1)`.
    pub fn forward(&self, samples: &[f64]) -> Result<Array2<Complex64>> {
        let n = self.cfg.fft_size;
        if samples.len() < n {
            return Err(Error::InsufficientInput {
                needed: n,
                got: samples.len(),
            });
        }
        let frames = self.cfg.num_frames(samples.len());
        let bins = self.cfg.num_bins();
        let mut out = Array2::<Complex64>::zeros((frames, bins));
        self.forward_into(samples, &mut out);
        Ok(out)
    }

    /// Like [`Stft::forward`], writing into a preallocated `frames × K`
    /// buffer. `samples` must hold at least that many frames.
    pub fn forward_into(&self, samples: &[f64], out: &mut Array2<Complex64>) {
        let n = self.cfg.fft_size;
        let frames = out.nrows();
        let mut input = self.forward.make_input_vec();
        let mut spectrum = self.forward.make_output_vec();
        let mut scratch = self.forward.make_scratch_vec();
        for t in 0..frames {
            let start = t * self.cfg.hop;
            for (dst, (&x, &w)) in input
                .iter_mut()
                .zip(samples[start..start + n].iter().zip(&self.window))
            {
                *dst = x * w;
            }
            self.forward
                .process_with_scratch(&mut input, &mut spectrum, &mut scratch)
                .expect("buffer sizes match the plan");
            out.row_mut(t)
                .iter_mut()
                .zip(&spectrum)
                .for_each(|(o, s)| *o = *s);
        }
    }

    /// Weighted overlap-add inverse producing `len` samples. The squared
    /// window sum is floored at a small fraction of its full-overlap value,
    /// which tapers the edge samples only a few frames cover.
    pub fn inverse(&self, spec: &Array2<Complex64>, len: usize) -> Vec<f64> {
        let n = self.cfg.fft_size;
        let hop = self.cfg.hop;
        let mut out = vec![0.0; len];
        let mut norm = vec![0.0; len];
        let mut spectrum = self.inverse.make_input_vec();
        let mut frame = self.inverse.make_output_vec();
        let mut scratch = self.inverse.make_scratch_vec();
        let scale = 1.0 / n as f64;
        for (t, row) in spec.outer_iter().enumerate() {
            let start = t * hop;
            if start >= len {
                break;
            }
            spectrum.iter_mut().zip(row.iter()).for_each(|(d, s)| *d = *s);
            // DC and Nyquist must be real for a real-valued inverse.
            spectrum[0].im = 0.0;
            let last = spectrum.len() - 1;
            spectrum[last].im = 0.0;
            self.inverse
                .process_with_scratch(&mut spectrum, &mut frame, &mut scratch)
                .expect("buffer sizes match the plan");
            let end = (start + n).min(len);
            for i in start..end {
                let w = self.window[i - start];
                out[i] += frame[i - start] * scale * w;
                norm[i] += w * w;
            }
        }
        let full: f64 = self.window.iter().map(|w| w * w).sum::<f64>() / hop as f64;
        let floor = 1e-3 * full;
        for (o, &d) in out.iter_mut().zip(&norm) {
            *o /= d.max(floor);
        }
        out
    }
}

/// Short-time Fourier transform of a waveform.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Array2<Complex64>> {
    Stft::new(*cfg)?.forward(&w.to_f64())
}
