//! Experiment plans and host sources.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::{resample, AttackSpec};
use crate::audio::{read_wav, Waveform};
use crate::dsp::{MelConfig, DEFAULT_ITERATIONS};
use crate::error::{Error, Result};
use crate::watermark::{BandSelection, DEFAULT_TAU, MAX_PAYLOAD_BITS};

use super::synth::speech_like;

/// Plan shipped with the crate: α and capacity sweeps over the standard
/// attack suite.
pub const DEFAULT_PLAN_TOML: &str = include_str!("../../plans/default.toml");

/// Plan shipped with the crate for threshold calibration.
pub const DEFAULT_CALIBRATION_PLAN_TOML: &str = include_str!("../../plans/calibration.toml");

/// Shortest host accepted, in STFT frames.
pub const MIN_HOST_FRAMES: usize = 16;

/// Source of host waveforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HostSpec {
    /// A fresh synthetic speech-like signal per trial.
    Synthetic { seconds: f64 },
    /// One WAV file.
    Wav { path: PathBuf },
    /// Every `.wav` file in a directory (non-recursive, sorted by name).
    WavDir { path: PathBuf },
}

fn default_hosts() -> Vec<HostSpec> {
    vec![HostSpec::Synthetic { seconds: 2.0 }]
}

fn default_attacks() -> Vec<AttackSpec> {
    vec![AttackSpec::Identity]
}

fn default_trials() -> usize {
    50
}

fn default_sample_rate() -> u32 {
    22050
}

fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_target_fpr() -> f64 {
    1e-3
}

fn default_alphas() -> Vec<f64> {
    vec![0.25]
}

fn default_lengths() -> Vec<usize> {
    vec![32]
}

/// Everything that determines an experiment's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub master_seed: u64,
    #[serde(default = "default_trials")]
    pub trials_per_cell: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_lengths")]
    pub payload_lengths: Vec<usize>,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    #[serde(default)]
    pub band: BandSelection,
    /// Phase-recovery iterations of the channel stand-in.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// False-positive target used by calibration.
    #[serde(default = "default_target_fpr")]
    pub target_fpr: f64,
    #[serde(default = "default_hosts")]
    pub hosts: Vec<HostSpec>,
    #[serde(default = "default_attacks")]
    pub attacks: Vec<AttackSpec>,
}

impl ExperimentPlan {
    /// A plan with one clean-channel cell and default settings.
    pub fn new(master_seed: u64) -> Self {
        toml::from_str(&format!("master_seed = {master_seed}")).expect("defaults parse")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: ExperimentPlan =
            toml::from_str(text).map_err(|e| Error::InvalidPlan(e.message().to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Reads a plan file. Relative host paths are resolved against the
    /// plan's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut plan = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for host in &mut plan.hosts {
            if let HostSpec::Wav { path } | HostSpec::WavDir { path } = host {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(plan)
    }

    pub fn default_sweep() -> Self {
        Self::from_toml(DEFAULT_PLAN_TOML).expect("bundled plan is valid")
    }

    pub fn default_calibration() -> Self {
        Self::from_toml(DEFAULT_CALIBRATION_PLAN_TOML).expect("bundled plan is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn mel_config(&self) -> MelConfig {
        MelConfig::for_sample_rate(self.sample_rate)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPlan(m));
        if self.trials_per_cell == 0 {
            return bad("trials_per_cell must be at least 1".into());
        }
        if self.alphas.is_empty() || self.payload_lengths.is_empty() {
            return bad("need at least one alpha and one payload length".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return bad(format!("alpha {a} must be finite and >= 0"));
        }
        if let Some(l) = self
            .payload_lengths
            .iter()
            .find(|&&l| l == 0 || l > MAX_PAYLOAD_BITS)
        {
            return bad(format!("payload length {l} outside 1..={MAX_PAYLOAD_BITS}"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} must lie in (0, 1]", self.tau));
        }
        if !(self.target_fpr > 0.0 && self.target_fpr < 1.0) {
            return bad(format!("target_fpr {} must lie in (0, 1)", self.target_fpr));
        }
        if self.hosts.is_empty() {
            return bad("need at least one host".into());
        }
        for h in &self.hosts {
            if let HostSpec::Synthetic { seconds } = h {
                if !(*seconds > 0.0 && *seconds <= 600.0) {
                    return bad(format!("synthetic host length {seconds} s outside (0, 600]"));
                }
            }
        }
        if self.attacks.is_empty() {
            return bad("need at least one attack (use `identity` for a clean channel)".into());
        }
        let cfg = self.mel_config();
        cfg.validate()?;
        self.band.validate(cfg.num_bands)?;
        for a in &self.attacks {
            a.validate(self.sample_rate)?;
        }
        Ok(())
    }
}

/// Hosts ready for sampling.
#[derive(Debug, Clone)]
pub enum HostSource {
    Synthetic { seconds: f64 },
    Audio { name: String, wave: Waveform },
}

/// Expands host specs, loading WAV files and resampling them to
/// `sample_rate`.
pub fn resolve_hosts(specs: &[HostSpec], sample_rate: u32) -> Result<Vec<HostSource>> {
    let min_len = {
        let cfg = MelConfig::for_sample_rate(sample_rate);
        cfg.stft.signal_len(MIN_HOST_FRAMES)
    };
    let load = |path: &Path| -> Result<HostSource> {
        let w = read_wav(path)?;
        let w = if w.sample_rate() == sample_rate {
            w
        } else {
            Waveform::from_f64(&resample(&w.to_f64(), w.sample_rate(), sample_rate), sample_rate)?
        };
        if w.len() < min_len {
            return Err(Error::InsufficientInput {
                needed: min_len,
                got: w.len(),
            });
        }
        Ok(HostSource::Audio {
            name: path.display().to_string(),
            wave: w,
        })
    };
    let mut out = Vec::new();
    for spec in specs {
        match spec {
            HostSpec::Synthetic { seconds } => out.push(HostSource::Synthetic { seconds: *seconds }),
            HostSpec::Wav { path } => out.push(load(path)?),
            HostSpec::WavDir { path } => {
                let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
                    .map(|e| e.map(|e| e.path()))
                    .collect::<std::io::Result<_>>()?;
                files.retain(|p| {
                    p.extension()
                        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
                });
                files.sort();
                if files.is_empty() {
                    return Err(Error::InvalidPlan(format!(
                        "no .wav files in {}",
                        path.display()
                    )));
                }
                for f in files {
                    out.push(load(&f)?);
                }
            }
        }
    }
    Ok(out)
}

impl HostSource {
    /// Waveform for one trial; synthetic hosts are generated from `seed`.
    pub fn waveform(&self, seed: u64, sample_rate: u32) -> Result<Waveform> {
        match self {
            HostSource::Synthetic { seconds } => speech_like(seed, *seconds, sample_rate),
            HostSource::Audio { wave, .. } => Ok(wave.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_plans_parse() {
        let p = ExperimentPlan::default_sweep();
        assert!(p.attacks.len() > 5);
        let c = ExperimentPlan::default_calibration();
        assert!(c.trials_per_cell >= 100);
    }

    #[test]
    fn toml_round_trip() {
        let p = ExperimentPlan::default_sweep();
        assert_eq!(ExperimentPlan::from_toml(&p.to_toml()).unwrap(), p);
    }

    #[test]
    fn minimal_plan_uses_defaults() {
        let p = ExperimentPlan::from_toml("master_seed = 9").unwrap();
        assert_eq!(p.trials_per_cell, 50);
        assert_eq!(p.payload_lengths, vec![32]);
        assert_eq!(p.attacks, vec![AttackSpec::Identity]);
        assert_eq!(p, ExperimentPlan::new(9));
    }

    #[test]
    fn invalid_plans_are_rejected() {
        for text in [
            "master_seed = 1\ntrials_per_cell = 0",
            "master_seed = 1\nalphas = [-0.1]",
            "master_seed = 1\npayload_lengths = [0]",
            "master_seed = 1\nhosts = []",
            "master_seed = 1\nband = { c_min = 70, c_max = 90 }",
            "master_seed = 1\nunknown = 3",
            "trials_per_cell = 3",
            "master_seed = 1\n[[attacks]]\nkind = \"low_pass\"\ncutoff_hz = 20000",
        ] {
            assert!(ExperimentPlan::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn wav_hosts_are_resampled() {
        let dir = tempfile::tempdir().unwrap();
        let w = speech_like(1, 1.0, 16000).unwrap();
        crate::audio::write_wav(dir.path().join("a.wav"), &w, Default::default()).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let hosts = resolve_hosts(
            &[HostSpec::WavDir {
                path: dir.path().to_path_buf(),
            }],
            22050,
        )
        .unwrap();
        assert_eq!(hosts.len(), 1);
        let HostSource::Audio { wave, .. } = &hosts[0] else {
            panic!("expected audio host")
        };
        assert_eq!(wave.sample_rate(), 22050);
        assert_eq!(wave.len(), 22050);
    }
}
