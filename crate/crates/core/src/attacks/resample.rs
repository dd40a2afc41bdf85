//! Rational-ratio polyphase resampling with a Blackman-windowed sinc kernel.

use std::f64::consts::PI;

/// Zero crossings of the kernel on each side, measured at the lower of the
/// two rates.
const ZERO_CROSSINGS: usize = 32;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn blackman(x: f64) -> f64 {
    // x in [-1, 1]
    if x.abs() >= 1.0 {
        return 0.0;
    }
    let t = PI * (x + 1.0);
    0.42 - 0.5 * t.cos() + 0.08 * (2.0 * t).cos()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Resamples `x` from `from_hz` to `to_hz`. The output has
/// `ceil(len · to / from)` samples. Equal rates return the input unchanged.
pub fn resample(x: &[f64], from_hz: u32, to_hz: u32) -> Vec<f64> {
    if from_hz == to_hz || x.is_empty() {
        return x.to_vec();
    }
    let g = gcd(from_hz as u64, to_hz as u64);
    let up = (to_hz as u64 / g) as usize;
    let down = (from_hz as u64 / g) as usize;

    // Cutoff relative to the input Nyquist frequency.
    let cutoff = (up as f64 / down as f64).min(1.0);
    let half = (ZERO_CROSSINGS as f64 / cutoff).ceil() as isize;
    let span = half as f64 + 1.0;

    // One kernel per output phase p/up; taps cover input samples
    // floor(t) - half + 1 ..= floor(t) + half.
    let taps = (2 * half) as usize;
    let table: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            (0..taps)
                .map(|i| {
                    let k = i as isize - half + 1;
                    let d = frac - k as f64;
                    cutoff * sinc(cutoff * d) * blackman(d / span)
                })
                .collect()
        })
        .collect();

    let out_len = (x.len() * up).div_ceil(down);
    let n_in = x.len() as isize;
    (0..out_len)
        .map(|n| {
            let pos = n * down;
            let base = (pos / up) as isize;
            let kernel = &table[pos % up];
            let first = base - half + 1;
            let mut acc = 0.0;
            for (i, &h) in kernel.iter().enumerate() {
                let j = first + i as isize;
                if j >= 0 && j < n_in {
                    acc += h * x[j as usize];
                }
            }
            acc
        })
        .collect()
}
