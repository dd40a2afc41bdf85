//! Seeded waveform distortions used to probe watermark robustness.
//!
//! Every attack maps a [`Waveform`] to a waveform of the same length and
//! sample rate. Filters are linear-phase with their group delay removed and
//! the resampler restores the original length, so frames stay aligned with
//! the reference.

mod codec;
mod fir;
mod resample;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use codec::{
    best_lag, external_codec, program_name, tool_available, AAC_96_TEMPLATE, MAX_CODEC_LAG,
    MP3_128_TEMPLATE,
};
pub use fir::{bandpass_taps, filter_zero_delay, lowpass_taps, magnitude_response, FIR_TAPS};
pub use resample::resample;

use crate::audio::Waveform;
use crate::error::{Error, Result};

pub const DEFAULT_ECHO_DELAY_MS: f64 = 100.0;
pub const DEFAULT_ECHO_DECAY: f64 = 0.3;

fn default_echo_delay() -> f64 {
    DEFAULT_ECHO_DELAY_MS
}

fn default_echo_decay() -> f64 {
    DEFAULT_ECHO_DECAY
}

fn default_codec_format() -> String {
    "mp3".into()
}

/// One distortion and its parameters.
///
/// Serializes as a tagged table, e.g. `{ kind = "low_pass", cutoff_hz = 3000 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    /// No distortion; the clean-channel reference condition.
    Identity,
    AdditiveNoise {
        snr_db: f64,
        #[serde(default)]
        seed: u64,
    },
    LowPass {
        cutoff_hz: f64,
    },
    BandPass {
        lo_hz: f64,
        hi_hz: f64,
    },
    /// Down to `target_hz` and back.
    Resample {
        target_hz: u32,
    },
    AmplitudeScale {
        gain: f64,
    },
    Echo {
        #[serde(default = "default_echo_delay")]
        delay_ms: f64,
        #[serde(default = "default_echo_decay")]
        decay: f64,
    },
    /// Encode/decode through an external program; see [`external_codec`].
    ExternalCodec {
        command: String,
        #[serde(default = "default_codec_format")]
        format: String,
    },
}

impl AttackSpec {
    pub fn noise(snr_db: f64, seed: u64) -> Self {
        AttackSpec::AdditiveNoise { snr_db, seed }
    }

    pub fn echo_default() -> Self {
        AttackSpec::Echo {
            delay_ms: DEFAULT_ECHO_DELAY_MS,
            decay: DEFAULT_ECHO_DECAY,
        }
    }

    /// Checks parameter ranges against the sample rate of the signal the
    /// attack will be applied to.
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        let bad = |msg: String| Err(Error::InvalidAttack(msg));
        match *self {
            AttackSpec::Identity => Ok(()),
            AttackSpec::AdditiveNoise { snr_db, .. } if !snr_db.is_finite() => {
                bad(format!("noise SNR must be finite, got {snr_db}"))
            }
            AttackSpec::LowPass { cutoff_hz } if !(cutoff_hz > 0.0 && cutoff_hz <= nyquist) => {
                bad(format!("low-pass cutoff {cutoff_hz} Hz outside (0, {nyquist}]"))
            }
            AttackSpec::BandPass { lo_hz, hi_hz }
                if !(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz <= nyquist) =>
            {
                bad(format!(
                    "band-pass {lo_hz}..{hi_hz} Hz needs 0 < lo < hi <= {nyquist}"
                ))
            }
            AttackSpec::Resample { target_hz: 0 } => bad("resample target must be > 0".into()),
            AttackSpec::AmplitudeScale { gain } if !(gain > 0.0 && gain.is_finite()) => {
                bad(format!("gain must be positive, got {gain}"))
            }
            AttackSpec::Echo { delay_ms, decay }
                if !(delay_ms >= 0.0 && delay_ms.is_finite() && (0.0..1.0).contains(&decay)) =>
            {
                bad(format!(
                    "echo needs delay >= 0 and decay in [0, 1), got {delay_ms} ms / {decay}"
                ))
            }
            AttackSpec::ExternalCodec { ref command, .. } if command.trim().is_empty() => {
                bad("codec command is empty".into())
            }
            _ => Ok(()),
        }
    }

    /// Short stable name used as the condition label in reports.
    pub fn label(&self) -> String {
        match self {
            AttackSpec::Identity => "clean".into(),
            AttackSpec::AdditiveNoise { snr_db, .. } => format!("noise_{snr_db}db"),
            AttackSpec::LowPass { cutoff_hz } => format!("lowpass_{cutoff_hz}hz"),
            AttackSpec::BandPass { lo_hz, hi_hz } => format!("bandpass_{lo_hz}_{hi_hz}hz"),
            AttackSpec::Resample { target_hz } => format!("resample_{target_hz}hz"),
            AttackSpec::AmplitudeScale { gain } => format!("scale_{gain}"),
            AttackSpec::Echo { delay_ms, decay } => format!("echo_{delay_ms}ms_{decay}"),
            AttackSpec::ExternalCodec { format, .. } => format!("codec_{format}"),
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self, AttackSpec::ExternalCodec { .. })
    }

    /// Copy of this attack whose noise seed is mixed with `trial_seed`, so
    /// one spec can be applied independently across trials. Other attacks
    /// are returned unchanged.
    pub fn for_trial(&self, trial_seed: u64) -> AttackSpec {
        match *self {
            AttackSpec::AdditiveNoise { snr_db, seed } => AttackSpec::AdditiveNoise {
                snr_db,
                seed: crate::pattern::SplitMix64::new(seed ^ trial_seed.rotate_left(17)).next_u64(),
            },
            _ => self.clone(),
        }
    }

    pub fn apply(&self, w: &Waveform) -> Result<Waveform> {
        self.validate(w.sample_rate())?;
        let sr = w.sample_rate();
        match self {
            AttackSpec::Identity => Ok(w.clone()),
            AttackSpec::AdditiveNoise { snr_db, seed } => additive_noise(w, *snr_db, *seed),
            AttackSpec::LowPass { cutoff_hz } => {
                let h = lowpass_taps(cutoff_hz / sr as f64, FIR_TAPS);
                Waveform::from_f64(&filter_zero_delay(&w.to_f64(), &h), sr)
            }
            AttackSpec::BandPass { lo_hz, hi_hz } => {
                let h = bandpass_taps(lo_hz / sr as f64, hi_hz / sr as f64, FIR_TAPS);
                Waveform::from_f64(&filter_zero_delay(&w.to_f64(), &h), sr)
            }
            AttackSpec::Resample { target_hz } => resample_round_trip(w, *target_hz),
            AttackSpec::AmplitudeScale { gain } => {
                let y: Vec<f64> = w.to_f64().iter().map(|s| s * gain).collect();
                Waveform::from_f64(&y, sr)
            }
            AttackSpec::Echo { delay_ms, decay } => echo(w, *delay_ms, *decay),
            AttackSpec::ExternalCodec { command, format } => external_codec(w, command, format),
        }
    }
}

impl fmt::Display for AttackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses `kind[:key=value,...]`, e.g. `noise:snr_db=10,seed=3`,
/// `lowpass:cutoff_hz=3000` or `echo`. Kinds accept their serialized names
/// and the short aliases `clean`, `noise`, `lowpass`, `bandpass`, `scale`
/// and `codec`.
impl FromStr for AttackSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) = match s.split_once(':') {
            Some((k, p)) => (k.trim(), p.trim()),
            None => (s.trim(), ""),
        };
        let kind = match kind {
            "clean" | "none" => "identity",
            "noise" => "additive_noise",
            "lowpass" => "low_pass",
            "bandpass" => "band_pass",
            "scale" => "amplitude_scale",
            "codec" => "external_codec",
            other => other,
        };
        let mut table = toml::Table::new();
        table.insert("kind".into(), toml::Value::String(kind.into()));
        if !params.is_empty() {
            for pair in params.split(',') {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidAttack(format!("expected key=value, got `{pair}`")))?;
                let v = v.trim();
                let value = if let Ok(i) = v.parse::<i64>() {
                    toml::Value::Integer(i)
                } else if let Ok(x) = v.parse::<f64>() {
                    toml::Value::Float(x)
                } else {
                    toml::Value::String(v.to_string())
                };
                table.insert(k.trim().to_string(), value);
            }
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidAttack(format!("`{s}`: {}", e.message())))
    }
}

/// Adds white Gaussian noise scaled so that the SNR before clamping is
/// exactly `snr_db`; the result is clamped to [-1, 1].
pub fn additive_noise(w: &Waveform, snr_db: f64, seed: u64) -> Result<Waveform> {
    let y = add_noise_unclamped(&w.to_f64(), snr_db, seed)?;
    Waveform::from_f64(&y, w.sample_rate())
}

/// The noisy signal before clamping.
pub fn add_noise_unclamped(x: &[f64], snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidAttack(format!("noise SNR must be finite, got {snr_db}")));
    }
    let signal_power: f64 = x.iter().map(|v| v * v).sum();
    if signal_power <= 0.0 {
        return Err(Error::InvalidWaveform(
            "noise SNR is undefined for a silent signal".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let noise_power: f64 = noise.iter().map(|v| v * v).sum();
    let scale = (signal_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(x.iter().zip(&noise).map(|(s, n)| s + scale * n).collect())
}

/// Resamples to `target_hz` and back, restoring the original length.
pub fn resample_round_trip(w: &Waveform, target_hz: u32) -> Result<Waveform> {
    let sr = w.sample_rate();
    let down = resample(&w.to_f64(), sr, target_hz);
    let mut back = resample(&down, target_hz, sr);
    back.resize(w.len(), 0.0);
    Waveform::from_f64(&back, sr)
}

/// `y[n] = x[n] + decay · x[n - d]` with `d` the delay rounded to samples.
pub fn echo(w: &Waveform, delay_ms: f64, decay: f64) -> Result<Waveform> {
    let d = (delay_ms * w.sample_rate() as f64 / 1000.0).round() as usize;
    let x = w.to_f64();
    let y: Vec<f64> = (0..x.len())
        .map(|n| x[n] + if n >= d { decay * x[n - d] } else { 0.0 })
        .collect();
    Waveform::from_f64(&y, w.sample_rate())
}

/// Attacks of the standard robustness matrix. Codec entries are included;
/// they are reported as skipped where the encoder is not installed.
pub fn standard_suite() -> Vec<AttackSpec> {
    vec![
        AttackSpec::Identity,
        AttackSpec::noise(20.0, 1),
        AttackSpec::noise(10.0, 2),
        AttackSpec::noise(5.0, 3),
        AttackSpec::LowPass { cutoff_hz: 3000.0 },
        AttackSpec::BandPass {
            lo_hz: 300.0,
            hi_hz: 8000.0,
        },
        AttackSpec::Resample { target_hz: 16000 },
        AttackSpec::AmplitudeScale { gain: 0.7 },
        AttackSpec::echo_default(),
        AttackSpec::ExternalCodec {
            command: MP3_128_TEMPLATE.into(),
            format: "mp3".into(),
        },
        AttackSpec::ExternalCodec {
            command: AAC_96_TEMPLATE.into(),
            format: "m4a".into(),
        },
    ]
}
