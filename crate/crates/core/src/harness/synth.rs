//! Synthetic speech-like host signals.
//!
//! A host is a sequence of syllables separated by short pauses. Voiced
//! syllables are harmonic stacks on a gliding F0 whose harmonic amplitudes
//! follow three formant resonances, mixed with a little aspiration noise.
//! Some syllables are unvoiced fricatives (high-band noise).

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::Waveform;
use crate::error::Result;

/// Peak level of generated hosts.
const HOST_PEAK: f64 = 0.8;

/// Second-order resonator (bandpass biquad, constant 0 dB peak gain).
struct Resonator {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(center_hz: f64, q: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * center_hz / sample_rate;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: alpha / a0,
            b2: -alpha / a0,
            a1: -2.0 * w0.cos() / a0,
            a2: (1.0 - alpha) / a0,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b2 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn formant_gain(f: f64, formants: &[(f64, f64, f64)]) -> f64 {
    formants
        .iter()
        .map(|&(center, bw, gain)| gain / (1.0 + ((f - center) / bw).powi(2)))
        .sum::<f64>()
        + 0.01
}

/// Raised-cosine fade in and out over `ramp` samples.
fn envelope(i: usize, len: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(len / 2).max(1);
    if i < ramp {
        0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
    } else if i >= len - ramp {
        0.5 - 0.5 * (PI * (len - i) as f64 / ramp as f64).cos()
    } else {
        1.0
    }
}

fn voiced(out: &mut [f64], rng: &mut ChaCha8Rng, sr: f64) {
    let len = out.len();
    let f0_start: f64 = rng.random_range(90.0..220.0);
    let f0_end = f0_start * rng.random_range(0.8..1.25);
    let formants = [
        (rng.random_range(300.0..900.0), 90.0, 1.0),
        (rng.random_range(900.0..2400.0), 130.0, rng.random_range(0.3..0.8)),
        (rng.random_range(2300.0..3600.0), 200.0, rng.random_range(0.1..0.4)),
    ];
    let max_freq = (sr / 2.0 * 0.9).min(8000.0);
    let harmonics = (max_freq / f0_start.max(f0_end)).floor() as usize;
    let mean_f0 = 0.5 * (f0_start + f0_end);
    let amps: Vec<f64> = (1..=harmonics)
        .map(|h| formant_gain(h as f64 * mean_f0, &formants) / (h as f64).sqrt())
        .collect();
    // Per-harmonic phase offsets as unit phasors.
    let offsets: Vec<(f64, f64)> = (0..harmonics)
        .map(|_| {
            let p: f64 = rng.random_range(0.0..2.0 * PI);
            (p.cos(), p.sin())
        })
        .collect();

    let mut aspiration = Resonator::new(formants[1].0, 4.0, sr);
    let ramp = (0.02 * sr) as usize;
    let mut phase = 0.0;
    for (i, o) in out.iter_mut().enumerate() {
        let frac = i as f64 / len as f64;
        let f0 = f0_start + (f0_end - f0_start) * frac;
        phase += 2.0 * PI * f0 / sr;
        // sin(h·φ + p_h) from successive powers of e^{iφ}.
        let (c1, s1) = (phase.cos(), phase.sin());
        let (mut re, mut im) = (c1, s1);
        let mut v = 0.0;
        for (&a, &(cp, sp)) in amps.iter().zip(&offsets) {
            v += a * (im * cp + re * sp);
            (re, im) = (re * c1 - im * s1, re * s1 + im * c1);
        }
        let n: f64 = StandardNormal.sample(rng);
        v += 0.05 * aspiration.process(n);
        *o = v * envelope(i, len, ramp);
    }
}

fn fricative(out: &mut [f64], rng: &mut ChaCha8Rng, sr: f64) {
    let len = out.len();
    let center = rng.random_range(3500.0..(sr / 2.0 * 0.8).min(7000.0));
    let mut res = Resonator::new(center, 2.0, sr);
    let level = rng.random_range(0.2..0.5);
    let ramp = (0.015 * sr) as usize;
    for (i, o) in out.iter_mut().enumerate() {
        let n: f64 = StandardNormal.sample(rng);
        *o = level * res.process(n) * envelope(i, len, ramp);
    }
}

/// Generates a deterministic speech-like host of the given duration.
pub fn speech_like(seed: u64, seconds: f64, sample_rate: u32) -> Result<Waveform> {
    let sr = sample_rate as f64;
    let total = (seconds * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut signal = vec![0.0f64; total];

    let mut pos = (rng.random_range(0.03..0.1) * sr) as usize;
    while pos < total {
        let seg_len = if rng.random_bool(0.2) {
            let n = (rng.random_range(0.06..0.15) * sr) as usize;
            let end = (pos + n).min(total);
            fricative(&mut signal[pos..end], &mut rng, sr);
            n
        } else {
            let n = (rng.random_range(0.12..0.3) * sr) as usize;
            let end = (pos + n).min(total);
            let level = rng.random_range(0.4..1.0);
            voiced(&mut signal[pos..end], &mut rng, sr);
            signal[pos..end].iter_mut().for_each(|s| *s *= level);
            n
        };
        pos += seg_len + (rng.random_range(0.04..0.15) * sr) as usize;
    }

    let peak = signal.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let gain = if peak > 0.0 { HOST_PEAK / peak } else { 1.0 };
    for s in &mut signal {
        let floor: f64 = StandardNormal.sample(&mut rng);
        *s = *s * gain + 1e-4 * floor;
    }
    Waveform::from_f64(&signal, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = speech_like(3, 1.0, 22050).unwrap();
        let b = speech_like(3, 1.0, 22050).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 22050);
        assert!(a.peak() <= 1.0);
        assert!(a.rms() > 0.01);
        assert_ne!(a, speech_like(4, 1.0, 22050).unwrap());
    }
}
