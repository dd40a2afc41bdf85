//! Embedding and extraction of keyed spread-spectrum watermarks in the
//! normalized log-Mel domain.
//!
//! Each payload bit `m_j` selects the sign of a keyed ±1 pattern `S_j`; the
//! patterns are superposed with a `1/√L` scale, shaped by a frame-energy
//! mask and added to a mid-frequency band of the spectrogram. Extraction is
//! reference-based: the clean spectrogram stored at embedding time is
//! subtracted from the suspect, and each bit is decoded from the sign of
//! the masked correlation between the residual and its pattern.

use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{LogMelSpectrogram, MelConfig};
use crate::error::{Error, Result};
use crate::pattern::{gen_pattern, SecretKey};

pub const MAX_PAYLOAD_BITS: usize = 4096;

/// Default acceptance threshold on bit accuracy.
pub const DEFAULT_TAU: f64 = 0.61;

/// Largest headroom applied by default.
pub const MAX_DEFAULT_HEADROOM: f64 = 0.05;

/// Default alignment search radius in frames.
pub const DEFAULT_MAX_SHIFT: usize = 8;

/// An `L`-bit message, `1 <= L <= 4096`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Payload(Vec<bool>);

impl Payload {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() || bits.len() > MAX_PAYLOAD_BITS {
            return Err(Error::InvalidPayload(format!(
                "length {} outside 1..={MAX_PAYLOAD_BITS}",
                bits.len()
            )));
        }
        Ok(Self(bits))
    }

    /// Parses a string of `0`/`1` characters.
    pub fn from_bit_string(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidPayload(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(bits)
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<Self> {
        Self::new((0..len).map(|_| rng.random::<bool>()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// `d_j = 2 m_j - 1`.
    pub fn polarity(&self, j: usize) -> f64 {
        if self.0[j] {
            1.0
        } else {
            -1.0
        }
    }

    pub fn to_bit_string(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn complement(&self) -> Payload {
        Payload(self.0.iter().map(|b| !b).collect())
    }
}

impl std::fmt::Display for Payload {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

/// Mel-band range `c_min..c_max` (exclusive upper bound).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandSelection {
    pub c_min: usize,
    pub c_max: usize,
}

impl Default for BandSelection {
    /// Bands 20 through 55.
    fn default() -> Self {
        Self { c_min: 20, c_max: 56 }
    }
}

impl BandSelection {
    pub fn new(c_min: usize, c_max: usize) -> Self {
        Self { c_min, c_max }
    }

    pub fn len(&self) -> usize {
        self.c_max.saturating_sub(self.c_min)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, c: usize) -> bool {
        (self.c_min..self.c_max).contains(&c)
    }

    pub fn validate(&self, num_bands: usize) -> Result<()> {
        if self.c_min < self.c_max && self.c_max <= num_bands {
            Ok(())
        } else {
            Err(Error::BandOutOfRange {
                c_min: self.c_min,
                c_max: self.c_max,
                num_bands,
            })
        }
    }
}

/// Everything needed to regenerate an embedding at verification time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatermarkMeta {
    pub payload_bits: usize,
    pub alpha: f64,
    pub headroom: f64,
    pub band: BandSelection,
    pub mel_config: MelConfig,
    pub key_id: String,
    pub utterance_id: String,
}

impl WatermarkMeta {
    /// Metadata with the default headroom `min(α, 0.05)`.
    pub fn new(
        payload_bits: usize,
        alpha: f64,
        band: BandSelection,
        mel_config: MelConfig,
        key_id: impl Into<String>,
        utterance_id: impl Into<String>,
    ) -> Self {
        Self {
            payload_bits,
            alpha,
            headroom: default_headroom(alpha),
            band,
            mel_config,
            key_id: key_id.into(),
            utterance_id: utterance_id.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.payload_bits == 0 || self.payload_bits > MAX_PAYLOAD_BITS {
            return Err(Error::InvalidPayload(format!(
                "payload length {} outside 1..={MAX_PAYLOAD_BITS}",
                self.payload_bits
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha {} must be >= 0", self.alpha)));
        }
        if !(0.0..0.5).contains(&self.headroom) {
            return Err(Error::InvalidConfig(format!(
                "headroom {} must lie in [0, 0.5)",
                self.headroom
            )));
        }
        self.mel_config.validate()?;
        self.band.validate(self.mel_config.num_bands)
    }
}

pub fn default_headroom(alpha: f64) -> f64 {
    alpha.clamp(0.0, MAX_DEFAULT_HEADROOM)
}

/// Clean spectrogram and metadata kept by the owner for verification.
/// Holds the key identifier only, never key material.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRecord {
    pub utterance_id: String,
    pub x_ref: LogMelSpectrogram,
    pub meta: WatermarkMeta,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

/// Frame-level embedding weights broadcast over the band.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveMask {
    frame_weights: Vec<f64>,
    rows: usize,
}

impl AdaptiveMask {
    pub fn frame_weights(&self) -> &[f64] {
        &self.frame_weights
    }

    pub fn get(&self, _row: usize, col: usize) -> f64 {
        self.frame_weights[col]
    }

    /// The full `|F| × M` mask.
    pub fn values(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.rows, self.frame_weights.len()), |(_, t)| {
            self.frame_weights[t]
        })
    }
}

/// Min-max normalized mean frame energy of the band, broadcast over rows.
/// Equal-energy input yields an all-ones mask.
pub fn compute_adaptive_mask(band: ArrayView2<'_, f64>) -> AdaptiveMask {
    let rows = band.nrows();
    let energies: Vec<f64> = band
        .columns()
        .into_iter()
        .map(|col| col.sum() / rows as f64)
        .collect();
    let lo = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let frame_weights = if energies.is_empty() || hi == lo {
        vec![1.0; energies.len()]
    } else {
        energies
            .iter()
            .map(|&e| (e - lo) / (hi - lo + 1e-12))
            .collect()
    };
    AdaptiveMask {
        frame_weights,
        rows,
    }
}

/// `W = (1/√L) Σ_j d_j S_j`, shape `rows × cols`.
pub fn build_watermark_layer(
    payload: &Payload,
    key: &SecretKey,
    utterance_id: &str,
    rows: usize,
    cols: usize,
) -> Array2<f64> {
    let mut acc = vec![0i32; rows * cols];
    for j in 0..payload.len() {
        let pattern = gen_pattern(key, utterance_id, j as u32, rows, cols);
        let d = if payload.bits()[j] { 1 } else { -1 };
        for (a, &e) in acc.iter_mut().zip(pattern.entries()) {
            *a += d * e as i32;
        }
    }
    let scale = 1.0 / (payload.len() as f64).sqrt();
    Array2::from_shape_vec((rows, cols), acc.into_iter().map(|v| v as f64 * scale).collect())
        .expect("shape matches buffer")
}

/// The band of `x`, compressed affinely into `[δ, 1 - δ]`.
fn compressed_band(x: ArrayView2<'_, f32>, band: BandSelection, headroom: f64) -> Array2<f64> {
    x.slice(s![band.c_min..band.c_max, ..])
        .mapv(|v| headroom + (1.0 - 2.0 * headroom) * v as f64)
}

/// Embeds `payload` into the band of `x` selected by `meta`.
///
/// Returns the watermarked spectrogram and a reference record holding the
/// original (unwatermarked) spectrogram.
pub fn embed(
    x: &LogMelSpectrogram,
    payload: &Payload,
    key: &SecretKey,
    meta: &WatermarkMeta,
) -> Result<(LogMelSpectrogram, ReferenceRecord)> {
    meta.validate()?;
    if payload.len() != meta.payload_bits {
        return Err(Error::LengthMismatch {
            expected: meta.payload_bits,
            got: payload.len(),
        });
    }
    if key.id() != meta.key_id {
        return Err(Error::InvalidKey(format!(
            "key `{}` does not match metadata key id `{}`",
            key.id(),
            meta.key_id
        )));
    }
    if *x.config() != meta.mel_config {
        return Err(Error::MelConfigMismatch);
    }
    meta.band.validate(x.num_bands())?;

    let band = meta.band;
    let frames = x.num_frames();
    let compressed = compressed_band(x.values(), band, meta.headroom);
    let mask = compute_adaptive_mask(compressed.view());
    let layer = build_watermark_layer(payload, key, &meta.utterance_id, band.len(), frames);

    let mut out = x.values().to_owned();
    for ((r, t), &v) in compressed.indexed_iter() {
        let marked = v + meta.alpha * mask.get(r, t) * layer[[r, t]];
        out[[band.c_min + r, t]] = marked.clamp(0.0, 1.0) as f32;
    }
    let watermarked = LogMelSpectrogram::new(out, *x.config())?;
    let created_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let record = ReferenceRecord {
        utterance_id: meta.utterance_id.clone(),
        x_ref: x.clone(),
        meta: meta.clone(),
        created_at,
    };
    Ok((watermarked, record))
}

/// Outcome of a keyed verification.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationResult {
    pub scores: Vec<f64>,
    pub decoded: Payload,
    /// Present when an expected payload was supplied.
    pub bit_acc: Option<f64>,
    pub accepted: bool,
    pub threshold: f64,
}

impl VerificationResult {
    pub fn mean_confidence(&self) -> f64 {
        self.scores.iter().map(|s| s.abs()).sum::<f64>() / self.scores.len() as f64
    }

    pub fn min_confidence(&self) -> f64 {
        self.scores.iter().map(|s| s.abs()).fold(f64::INFINITY, f64::min)
    }
}

/// Masked correlation scores `s_j` for a suspect given as raw (unclamped)
/// values. The global mean of the residual is removed first, so adding a
/// constant to every entry of `x_det` leaves the scores unchanged.
pub fn masked_scores(
    x_det: ArrayView2<'_, f64>,
    reference: &ReferenceRecord,
    key: &SecretKey,
) -> Result<Vec<f64>> {
    let meta = &reference.meta;
    meta.validate()?;
    let x_ref = reference.x_ref.values();
    if x_det.nrows() != x_ref.nrows() {
        return Err(Error::MelConfigMismatch);
    }
    if x_det.ncols() != x_ref.ncols() {
        return Err(Error::FrameCountMismatch {
            reference: x_ref.ncols(),
            suspect: x_det.ncols(),
        });
    }
    let band = meta.band;
    band.validate(x_ref.nrows())?;
    let frames = x_ref.ncols();

    let mut residual = Array2::<f64>::zeros(x_ref.dim());
    ndarray::Zip::from(&mut residual)
        .and(&x_det)
        .and(&x_ref)
        .for_each(|r, &d, &x| *r = d - x as f64);
    let mean = residual.mean().unwrap_or(0.0);

    let mask = compute_adaptive_mask(compressed_band(x_ref, band, meta.headroom).view());
    let weighted: Vec<f64> = residual
        .slice(s![band.c_min..band.c_max, ..])
        .indexed_iter()
        .map(|((_, t), &d)| (d - mean) * mask.get(0, t))
        .collect();

    Ok((0..meta.payload_bits)
        .map(|j| {
            let pattern = gen_pattern(key, &meta.utterance_id, j as u32, band.len(), frames);
            weighted
                .iter()
                .zip(pattern.entries())
                .map(|(&w, &e)| if e > 0 { w } else { -w })
                .sum()
        })
        .collect())
}

/// Decodes the payload from an aligned suspect spectrogram and, when
/// `expected` is given, scores it against the expected payload at
/// threshold `tau`.
pub fn extract(
    x_det: &LogMelSpectrogram,
    reference: &ReferenceRecord,
    key: &SecretKey,
    expected: Option<&Payload>,
    tau: f64,
) -> Result<VerificationResult> {
    if x_det.config() != reference.x_ref.config() {
        return Err(Error::MelConfigMismatch);
    }
    let det = x_det.values().mapv(|v| v as f64);
    let scores = masked_scores(det.view(), reference, key)?;
    let decoded = Payload::new(scores.iter().map(|&s| s >= 0.0).collect())?;
    let bit_acc = expected.map(|m| bit_accuracy(m, &decoded)).transpose()?;
    Ok(VerificationResult {
        scores,
        accepted: bit_acc.is_some_and(|a| a >= tau),
        decoded,
        bit_acc,
        threshold: tau,
    })
}

/// Fraction of positions where the two payloads agree.
pub fn bit_accuracy(m: &Payload, m_hat: &Payload) -> Result<f64> {
    if m.len() != m_hat.len() {
        return Err(Error::LengthMismatch {
            expected: m.len(),
            got: m_hat.len(),
        });
    }
    let agree = m.bits().iter().zip(m_hat.bits()).filter(|(a, b)| a == b).count();
    Ok(agree as f64 / m.len() as f64)
}

/// Result of time alignment.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub aligned: LogMelSpectrogram,
    /// Frames by which the suspect lags the reference.
    pub shift: isize,
    pub correlation: f64,
}

/// Linear-power frame energies: the normalized values are mapped back to
/// dB above the floor and summed as power over bands.
fn frame_energy(x: &LogMelSpectrogram) -> Vec<f64> {
    let cfg = x.config();
    let span_db = cfg.norm_ceil_db - cfg.norm_floor_db;
    x.values()
        .columns()
        .into_iter()
        .map(|c| {
            c.iter()
                .map(|&v| 10f64.powf(v as f64 * span_db / 10.0))
                .sum::<f64>()
        })
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 1e-18 || sbb <= 1e-18 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Aligns `x_det` to `x_ref` by the integer frame shift in
/// `[-max_shift, max_shift]` that maximizes the Pearson correlation of
/// frame-energy sequences. The result has exactly as many frames as the
/// reference; frames shifted in from outside the suspect are zero. Ties go
/// to the smallest `|shift|`, then to the negative shift.
pub fn align(
    x_det: &LogMelSpectrogram,
    x_ref: &LogMelSpectrogram,
    max_shift: usize,
) -> Result<Alignment> {
    if x_det.config() != x_ref.config() {
        return Err(Error::MelConfigMismatch);
    }
    let m_ref = x_ref.num_frames();
    let m_det = x_det.num_frames();
    let e_ref = frame_energy(x_ref);
    let e_det = frame_energy(x_det);
    let shifted = |s: isize| -> Vec<f64> {
        (0..m_ref as isize)
            .map(|t| {
                let src = t + s;
                if src >= 0 && (src as usize) < m_det {
                    e_det[src as usize]
                } else {
                    0.0
                }
            })
            .collect()
    };

    let max = max_shift as isize;
    let mut candidates: Vec<isize> = vec![0];
    for d in 1..=max {
        candidates.push(-d);
        candidates.push(d);
    }
    let mut best = (0isize, f64::NEG_INFINITY);
    for &s in &candidates {
        let r = pearson(&shifted(s), &e_ref);
        // Candidates are visited in tie-break order; only a strict
        // improvement replaces the incumbent.
        if r > best.1 + 1e-12 {
            best = (s, r);
        }
    }
    let (shift, correlation) = best;
    if correlation <= 0.0 && m_det.abs_diff(m_ref) > max_shift {
        return Err(Error::AlignmentFailed(format!(
            "no positive correlation within ±{max_shift} frames and lengths differ by {}",
            m_det.abs_diff(m_ref)
        )));
    }

    let det = x_det.values();
    let aligned = Array2::from_shape_fn((x_det.num_bands(), m_ref), |(c, t)| {
        let src = t as isize + shift;
        if src >= 0 && (src as usize) < m_det {
            det[[c, src as usize]]
        } else {
            0.0
        }
    });
    Ok(Alignment {
        aligned: LogMelSpectrogram::new(aligned, *x_ref.config())?,
        shift,
        correlation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::KEY_LEN;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn key(b: u8) -> SecretKey {
        SecretKey::new([b; KEY_LEN], format!("k{b}")).unwrap()
    }

    fn host(frames: usize, seed: u64) -> LogMelSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = Array2::from_shape_fn((80, frames), |(c, t)| {
            let env = 0.5 + 0.4 * ((t as f32) * 0.07).sin();
            (env * (1.0 - c as f32 / 120.0) + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0)
        });
        LogMelSpectrogram::new(values, MelConfig::default()).unwrap()
    }

    fn host_random_frames(frames: usize, seed: u64) -> LogMelSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env: Vec<f32> = (0..frames).map(|_| rng.random_range(0.1..0.9)).collect();
        let values = Array2::from_shape_fn((80, frames), |(c, t)| {
            (env[t] * (1.0 - c as f32 / 120.0) + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0)
        });
        LogMelSpectrogram::new(values, MelConfig::default()).unwrap()
    }

    fn meta(l: usize, alpha: f64, k: &SecretKey) -> WatermarkMeta {
        WatermarkMeta::new(l, alpha, BandSelection::default(), MelConfig::default(), k.id(), "utt-1")
    }

    #[test]
    fn mask_constant_input_is_all_ones() {
        let band = Array2::from_elem((36, 10), 0.4);
        assert!(compute_adaptive_mask(band.view()).values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mask_silent_frame_is_zero() {
        let mut band = Array2::from_elem((5, 4), 1.0);
        band.column_mut(2).fill(0.0);
        let m = compute_adaptive_mask(band.view()).values();
        assert!(m.column(2).iter().all(|&v| v == 0.0));
        for t in [0, 1, 3] {
            assert!(m.column(t).iter().all(|&v| (v - 1.0).abs() < 1e-9));
        }
    }

    #[test]
    fn mask_ramp() {
        let band = Array2::from_shape_fn((3, 3), |(_, t)| [0.2, 0.4, 0.6][t]);
        let w = compute_adaptive_mask(band.view());
        for (got, want) in w.frame_weights().iter().zip([0.0, 0.5, 1.0]) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn single_bit_layer_is_the_pattern() {
        let k = key(1);
        let p = gen_pattern(&k, "u", 0, 4, 9);
        let one = build_watermark_layer(&Payload::new(vec![true]).unwrap(), &k, "u", 4, 9);
        let zero = build_watermark_layer(&Payload::new(vec![false]).unwrap(), &k, "u", 4, 9);
        for ((r, c), &v) in one.indexed_iter() {
            assert_eq!(v, p.get(r, c) as f64);
            assert_eq!(zero[[r, c]], -v);
        }
    }

    #[test]
    fn bit_accuracy_examples() {
        let m = Payload::from_bit_string("1011").unwrap();
        let h = Payload::from_bit_string("1001").unwrap();
        assert_eq!(bit_accuracy(&m, &m).unwrap(), 1.0);
        assert_eq!(bit_accuracy(&m, &h).unwrap(), 0.75);
        assert_eq!(bit_accuracy(&m, &m.complement()).unwrap(), 0.0);
        assert!(bit_accuracy(&m, &Payload::from_bit_string("10").unwrap()).is_err());
    }

    #[test]
    fn payload_bounds() {
        assert!(Payload::new(vec![]).is_err());
        assert!(Payload::new(vec![true; 4097]).is_err());
        assert!(Payload::from_bit_string("10x").is_err());
    }

    #[test]
    fn zero_strength_without_headroom_is_identity() {
        let k = key(2);
        let x = host(100, 1);
        let mut m = meta(32, 0.0, &k);
        assert_eq!(m.headroom, 0.0);
        m.headroom = 0.0;
        let payload = Payload::random(32, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let (wm, rec) = embed(&x, &payload, &k, &m).unwrap();
        assert_eq!(wm, x);
        assert_eq!(rec.x_ref, x);
    }

    #[test]
    fn zero_strength_with_headroom_only_compresses() {
        let k = key(2);
        let x = host(50, 2);
        let mut m = meta(8, 0.0, &k);
        m.headroom = 0.03;
        let payload = Payload::random(8, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let (wm, _) = embed(&x, &payload, &k, &m).unwrap();
        for ((c, t), &v) in wm.values().indexed_iter() {
            let orig = x.values()[[c, t]];
            if m.band.contains(c) {
                let want = (0.03 + 0.94 * orig as f64) as f32;
                assert_eq!(v, want);
            } else {
                assert_eq!(v, orig);
            }
        }
    }

    #[test]
    fn embed_is_local_and_bounded() {
        let k = key(5);
        let x = host(120, 5);
        let m = meta(32, 0.25, &k);
        let payload = Payload::random(32, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let (wm, _) = embed(&x, &payload, &k, &m).unwrap();
        for ((c, t), &v) in wm.values().indexed_iter() {
            let orig = x.values()[[c, t]];
            assert!((0.0..=1.0).contains(&v));
            if !m.band.contains(c) {
                assert_eq!(v.to_bits(), orig.to_bits());
            }
        }
    }

    #[test]
    fn embed_rejects_mismatches() {
        let k = key(5);
        let x = host(20, 5);
        let payload = Payload::random(16, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert!(matches!(
            embed(&x, &payload, &k, &meta(32, 0.25, &k)),
            Err(Error::LengthMismatch { .. })
        ));
        let mut m = meta(16, 0.25, &k);
        m.band = BandSelection::new(70, 81);
        assert!(matches!(
            embed(&x, &payload, &k, &m),
            Err(Error::BandOutOfRange { .. })
        ));
        assert!(matches!(
            embed(&x, &payload, &key(9), &meta(16, 0.25, &k)),
            Err(Error::InvalidKey(_))
        ));
    }

    #[test]
    fn round_trip_without_channel() {
        let k = key(7);
        let x = host(400, 7);
        let m = meta(32, 0.25, &k);
        let payload = Payload::random(32, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let (wm, rec) = embed(&x, &payload, &k, &m).unwrap();
        let res = extract(&wm, &rec, &k, Some(&payload), DEFAULT_TAU).unwrap();
        assert_eq!(res.bit_acc, Some(1.0));
        assert!(res.accepted);
        assert_eq!(res.decoded, payload);
    }

    #[test]
    fn unmarked_suspect_decodes_all_ones() {
        let k = key(7);
        let x = host(60, 9);
        let m = meta(16, 0.25, &k);
        let payload = Payload::random(16, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let (_, rec) = embed(&x, &payload, &k, &m).unwrap();
        let res = extract(&x, &rec, &k, None, DEFAULT_TAU).unwrap();
        assert!(res.scores.iter().all(|&s| s == 0.0));
        assert!(res.decoded.bits().iter().all(|&b| b));
        assert_eq!(res.bit_acc, None);
        assert!(!res.accepted);
    }

    #[test]
    fn extract_rejects_frame_mismatch() {
        let k = key(7);
        let x = host(60, 9);
        let payload = Payload::random(16, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let (_, rec) = embed(&x, &payload, &k, &meta(16, 0.25, &k)).unwrap();
        assert!(matches!(
            extract(&host(59, 9), &rec, &k, None, DEFAULT_TAU),
            Err(Error::FrameCountMismatch { .. })
        ));
    }

    #[test]
    fn align_identity_and_constant() {
        let x = host(80, 3);
        let a = align(&x, &x, 8).unwrap();
        assert_eq!(a.shift, 0);
        assert_eq!(a.aligned, x);

        let flat = LogMelSpectrogram::new(Array2::from_elem((80, 40), 0.5), MelConfig::default())
            .unwrap();
        assert_eq!(align(&flat, &flat, 8).unwrap().shift, 0);
    }

    #[test]
    fn align_recovers_delay() {
        let x = host_random_frames(120, 4);
        let vals = x.values();
        let delayed = Array2::from_shape_fn((80, 120), |(c, t)| if t < 3 { 0.0 } else { vals[[c, t - 3]] });
        let d = LogMelSpectrogram::new(delayed, MelConfig::default()).unwrap();
        let a = align(&d, &x, 8).unwrap();
        assert_eq!(a.shift, 3);
        let al = a.aligned.values();
        let mut err = 0.0f64;
        for c in 0..80 {
            for t in 0..117 {
                err += (al[[c, t]] as f64 - vals[[c, t]] as f64).powi(2);
            }
        }
        assert!(err.sqrt() <= 1e-9);
    }

    #[test]
    fn align_fails_on_unrelated_long_mismatch() {
        let ramp = Array2::from_shape_fn((80, 100), |(_, t)| t as f32 / 100.0);
        let x = LogMelSpectrogram::new(ramp, MelConfig::default()).unwrap();
        let flat = LogMelSpectrogram::new(Array2::from_elem((80, 60), 0.5), MelConfig::default())
            .unwrap();
        assert!(matches!(align(&flat, &x, 8), Err(Error::AlignmentFailed(_))));
    }
}
