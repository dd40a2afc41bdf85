//! Fidelity and detection statistics.

use serde::Serialize;

use crate::audio::Waveform;
use crate::dsp::{Stft, StftConfig};
use crate::error::{Error, Result};

/// Reported in place of +∞ when the degraded signal equals the reference.
pub const SNR_CAP_DB: f64 = 200.0;

/// Magnitude floor used by [`log_spectral_distance`].
pub const LSD_EPS: f64 = 1e-10;

/// `10 log10(Σ ref² / Σ (ref - deg)²)`, capped at [`SNR_CAP_DB`].
pub fn snr_slices(reference: &[f64], degraded: &[f64]) -> Result<f64> {
    if reference.len() != degraded.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            got: degraded.len(),
        });
    }
    let signal: f64 = reference.iter().map(|v| v * v).sum();
    if signal <= 0.0 {
        return Err(Error::InvalidWaveform("SNR reference is all zeros".into()));
    }
    let noise: f64 = reference
        .iter()
        .zip(degraded)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    if noise == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (signal / noise).log10()).min(SNR_CAP_DB))
}

/// Waveform SNR of `degraded` against `reference`.
pub fn snr(reference: &Waveform, degraded: &Waveform) -> Result<f64> {
    snr_slices(&reference.to_f64(), &degraded.to_f64())
}

/// Mean over frames of the RMS difference (in dB, over bins) between the
/// magnitude spectra of the two signals.
pub fn log_spectral_distance(
    reference: &Waveform,
    degraded: &Waveform,
    cfg: &StftConfig,
) -> Result<f64> {
    if reference.len() != degraded.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            got: degraded.len(),
        });
    }
    let stft = Stft::new(*cfg)?;
    let a = stft.forward(&reference.to_f64())?;
    let b = stft.forward(&degraded.to_f64())?;
    let db = |z: &realfft::num_complex::Complex64| 20.0 * (z.norm() + LSD_EPS).log10();
    let per_frame: Vec<f64> = a
        .rows()
        .into_iter()
        .zip(b.rows())
        .map(|(ra, rb)| {
            let ms = ra
                .iter()
                .zip(rb.iter())
                .map(|(x, y)| (db(x) - db(y)).powi(2))
                .sum::<f64>()
                / ra.len() as f64;
            ms.sqrt()
        })
        .collect();
    Ok(per_frame.iter().sum::<f64>() / per_frame.len() as f64)
}

/// Fidelity and decoding measurements for one trial under one condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub attack_label: String,
    pub snr_db: f64,
    pub lsd_db: f64,
    pub bit_acc: Option<f64>,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd {
            mean,
            std: var.sqrt(),
        })
    }
}

/// Per-condition summary produced by [`aggregate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub condition: String,
    pub count: usize,
    /// `None` when no report of the condition carried a bit accuracy.
    pub bit_acc: Option<MeanStd>,
    pub snr_db: MeanStd,
    pub lsd_db: MeanStd,
}

/// Groups reports by `attack_label`, in order of first appearance.
pub fn aggregate(reports: &[QualityReport]) -> Result<Vec<SummaryRow>> {
    if reports.is_empty() {
        return Err(Error::Empty("no reports to aggregate".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    for r in reports {
        if !order.contains(&r.attack_label.as_str()) {
            order.push(&r.attack_label);
        }
    }
    Ok(order
        .into_iter()
        .map(|label| {
            let rows: Vec<&QualityReport> =
                reports.iter().filter(|r| r.attack_label == label).collect();
            let accs: Vec<f64> = rows.iter().filter_map(|r| r.bit_acc).collect();
            let snrs: Vec<f64> = rows.iter().map(|r| r.snr_db).collect();
            let lsds: Vec<f64> = rows.iter().map(|r| r.lsd_db).collect();
            SummaryRow {
                condition: label.to_string(),
                count: rows.len(),
                bit_acc: MeanStd::of(&accs),
                snr_db: MeanStd::of(&snrs).expect("nonempty group"),
                lsd_db: MeanStd::of(&lsds).expect("nonempty group"),
            }
        })
        .collect())
}

fn ln_choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// `P[X >= k]` for `X ~ Binomial(n, p)`.
pub fn binomial_upper_tail(n: u64, k: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    (k..=n)
        .map(|i| (ln_choose(n, i) + i as f64 * p.ln() + (n - i) as f64 * (1.0 - p).ln()).exp())
        .sum::<f64>()
        .min(1.0)
}

/// Smallest number of agreeing bits `k` with `k / bits >= tau`, using the
/// same comparison as the verification decision.
pub fn min_agreeing_bits(bits: u64, tau: f64) -> u64 {
    (0..=bits)
        .find(|&k| k as f64 / bits as f64 >= tau)
        .unwrap_or(bits + 1)
}

/// Probability that a payload of `bits` unrelated bits is accepted at
/// threshold `tau` (each bit agreeing with probability 1/2).
pub fn chance_acceptance(bits: u64, tau: f64) -> f64 {
    binomial_upper_tail(bits, min_agreeing_bits(bits, tau), 0.5)
}
