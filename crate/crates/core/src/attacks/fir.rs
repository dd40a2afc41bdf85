use std::f64::consts::PI;

/// Number of taps of every filter (order 254, odd length so the group delay
/// is an integer number of samples).
pub const FIR_TAPS: usize = 255;

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Symmetric Hann window without zero end points.
fn hann(n: usize, len: usize) -> f64 {
    let x = PI * (n + 1) as f64 / (len + 1) as f64;
    x.sin().powi(2)
}

/// Windowed-sinc low-pass with cutoff as a fraction of the sample rate
/// (0.5 = Nyquist), normalized to unit DC gain.
pub fn lowpass_taps(cutoff: f64, taps: usize) -> Vec<f64> {
    let center = (taps / 2) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| 2.0 * cutoff * sinc(2.0 * cutoff * (n as f64 - center)) * hann(n, taps))
        .collect();
    let dc: f64 = h.iter().sum();
    if dc.abs() > 1e-12 {
        h.iter_mut().for_each(|v| *v /= dc);
    }
    h
}

/// Band-pass as the difference of two low-passes.
pub fn bandpass_taps(lo: f64, hi: f64, taps: usize) -> Vec<f64> {
    let a = lowpass_taps(hi, taps);
    let b = lowpass_taps(lo, taps);
    a.iter().zip(&b).map(|(x, y)| x - y).collect()
}

/// Linear-phase filtering with the `(taps - 1) / 2` sample delay removed;
/// the output has the input's length.
pub fn filter_zero_delay(x: &[f64], h: &[f64]) -> Vec<f64> {
    let delay = (h.len() - 1) / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            // y[i] = Σ_k h[k] x[i + delay - k], zero outside the signal
            let top = i + delay;
            let k_lo = top.saturating_sub(n - 1);
            let k_hi = top.min(h.len() - 1);
            (k_lo..=k_hi).map(|k| h[k] * x[top - k]).sum()
        })
        .collect()
}

/// Magnitude response of `h` at a frequency given as a fraction of the
/// sample rate.
pub fn magnitude_response(h: &[f64], freq: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (n, &c) in h.iter().enumerate() {
        let ang = -2.0 * PI * freq * n as f64;
        re += c * ang.cos();
        im += c * ang.sin();
    }
    (re * re + im * im).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nyquist_lowpass_is_a_delta() {
        let h = lowpass_taps(0.5, FIR_TAPS);
        for (i, &v) in h.iter().enumerate() {
            if i == FIR_TAPS / 2 {
                assert!((v - 1.0).abs() < 1e-12);
            } else {
                assert!(v.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_delay_preserves_impulse_position() {
        let mut x = vec![0.0; 600];
        x[300] = 1.0;
        let h = lowpass_taps(0.2, FIR_TAPS);
        let y = filter_zero_delay(&x, &h);
        let peak = y
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 300);
    }

    #[test]
    fn response_has_passband_and_stopband() {
        let h = lowpass_taps(3000.0 / 22050.0, FIR_TAPS);
        assert!((magnitude_response(&h, 1000.0 / 22050.0) - 1.0).abs() < 0.01);
        assert!(magnitude_response(&h, 5000.0 / 22050.0) < 0.01);
    }
}
