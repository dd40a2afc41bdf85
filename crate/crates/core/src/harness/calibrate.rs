//! H0/H1 bit-accuracy distributions and threshold selection.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dsp::mel_to_waveform;
use crate::error::{Error, Result};
use crate::metrics::MeanStd;

use super::plan::{resolve_hosts, ExperimentPlan};
use super::trial::{bit_acc_of, derive_trial_seed, embed_trial, random_user, setup_trial};

/// Fewest trials per hypothesis accepted by [`calibrate_threshold`].
pub const MIN_CALIBRATION_TRIALS: usize = 100;

pub const HISTOGRAM_CSV_HEADER: &str = "condition,bit_acc,count";

/// Bit accuracies of one detection trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionTrial {
    /// Watermarked audio, owner's key and payload.
    pub h1: f64,
    /// Watermarked audio, an independent key and payload.
    pub wrong_key: Option<f64>,
    /// The unwatermarked host through the same channel, owner's key.
    pub unmarked: Option<f64>,
}

/// Which null conditions to evaluate for each trial index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullSchedule {
    None,
    WrongKeyOnly,
    UnmarkedOnly,
    /// Even trials test a wrong key, odd trials unmarked audio.
    Alternate,
}

/// Runs `trials` detection trials at the plan's first payload length and α
/// through the clean channel stand-in.
pub fn detection_trials(
    plan: &ExperimentPlan,
    trials: usize,
    schedule: NullSchedule,
) -> Result<Vec<DetectionTrial>> {
    plan.validate()?;
    let hosts = resolve_hosts(&plan.hosts, plan.sample_rate)?;
    let cfg = plan.mel_config();
    let bits = plan.payload_lengths[0];
    let alpha = plan.alphas[0];
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = derive_trial_seed(plan.master_seed, "detect", &[i as u64]);
            let mut setup = setup_trial(&hosts, &cfg, seed, bits)?;
            let trial = embed_trial(&setup, alpha, plan.band, plan.iterations)?;
            let h1 = bit_acc_of(&trial.record, &setup.owner, &trial.audio, plan.tau)?;
            let (wrong, unmarked) = match schedule {
                NullSchedule::None => (false, false),
                NullSchedule::WrongKeyOnly => (true, false),
                NullSchedule::UnmarkedOnly => (false, true),
                NullSchedule::Alternate => (i % 2 == 0, i % 2 == 1),
            };
            let wrong_key = if wrong {
                let impostor = random_user("impostor", bits, &mut setup.rng)?;
                Some(bit_acc_of(&trial.record, &impostor, &trial.audio, plan.tau)?)
            } else {
                None
            };
            let unmarked = if unmarked {
                let audio = mel_to_waveform(&setup.mel, plan.iterations)?;
                Some(bit_acc_of(&trial.record, &setup.owner, &audio, plan.tau)?)
            } else {
                None
            };
            Ok(DetectionTrial {
                h1,
                wrong_key,
                unmarked,
            })
        })
        .collect()
}

/// Outcome of threshold calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub payload_bits: usize,
    pub alpha: f64,
    pub target_fpr: f64,
    /// The plan's nominal threshold, reported for comparison.
    pub reference_tau: f64,
    pub h1: Vec<f64>,
    pub h0_unmarked: Vec<f64>,
    pub h0_wrong_key: Vec<f64>,
    /// Smallest `k / L` whose empirical H0 acceptance rate is at most the
    /// target; `None` if no grid point qualifies.
    pub tau_star: Option<f64>,
    pub fpr_at_tau_star: Option<f64>,
    pub fnr_at_tau_star: Option<f64>,
}

/// Fraction of `values` accepted at `tau` (`value >= tau`).
pub fn acceptance_rate(values: &[f64], tau: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v >= tau).count() as f64 / values.len() as f64
}

impl CalibrationReport {
    /// Union of both null conditions.
    pub fn h0(&self) -> Vec<f64> {
        self.h0_unmarked
            .iter()
            .chain(&self.h0_wrong_key)
            .copied()
            .collect()
    }

    /// Counts per bit-accuracy grid value `k / L` for each condition.
    pub fn histogram_csv(&self) -> String {
        let l = self.payload_bits;
        let mut s = String::from(HISTOGRAM_CSV_HEADER);
        s.push('\n');
        for (name, values) in [
            ("h1", &self.h1),
            ("h0_unmarked", &self.h0_unmarked),
            ("h0_wrong_key", &self.h0_wrong_key),
        ] {
            for k in 0..=l {
                let v = k as f64 / l as f64;
                let count = values.iter().filter(|&&x| x == v).count();
                let _ = writeln!(s, "{name},{v:.6},{count}");
            }
        }
        s
    }

    /// Human-readable summary lines.
    pub fn summary(&self) -> String {
        let stats = |v: &[f64]| {
            MeanStd::of(v)
                .map(|m| format!("n={} mean={:.4} std={:.4}", v.len(), m.mean, m.std))
                .unwrap_or_else(|| "n=0".into())
        };
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "none".into());
        let h0 = self.h0();
        let mut s = String::new();
        let _ = writeln!(s, "payload_bits={} alpha={}", self.payload_bits, self.alpha);
        let _ = writeln!(s, "h1: {}", stats(&self.h1));
        let _ = writeln!(s, "h0_unmarked: {}", stats(&self.h0_unmarked));
        let _ = writeln!(s, "h0_wrong_key: {}", stats(&self.h0_wrong_key));
        let _ = writeln!(
            s,
            "at tau={}: h0 acceptance={:.4} (unmarked {:.4}, wrong key {:.4}), h1 acceptance={:.4}",
            self.reference_tau,
            acceptance_rate(&h0, self.reference_tau),
            acceptance_rate(&self.h0_unmarked, self.reference_tau),
            acceptance_rate(&self.h0_wrong_key, self.reference_tau),
            acceptance_rate(&self.h1, self.reference_tau),
        );
        let _ = writeln!(
            s,
            "tau*={} (target fpr {}) fpr={} fnr={}",
            opt(self.tau_star),
            self.target_fpr,
            opt(self.fpr_at_tau_star),
            opt(self.fnr_at_tau_star)
        );
        s
    }
}

/// Smallest grid threshold `k / bits` with empirical false-positive rate
/// at most `target_fpr`, with its FPR and FNR.
pub fn select_threshold(
    h1: &[f64],
    h0: &[f64],
    bits: usize,
    target_fpr: f64,
) -> Option<(f64, f64, f64)> {
    (0..=bits).find_map(|k| {
        let tau = k as f64 / bits as f64;
        let fpr = acceptance_rate(h0, tau);
        (fpr <= target_fpr).then(|| (tau, fpr, 1.0 - acceptance_rate(h1, tau)))
    })
}

/// Estimates H1 (correct key) and H0 (unwatermarked audio, and watermarked
/// audio checked with a wrong key) bit-accuracy distributions and picks
/// the threshold. The plan's `trials_per_cell` is the number of trials per
/// hypothesis; H0 trials are split evenly between its two conditions.
/// Uses the first payload length and α of the plan and ignores attacks.
pub fn calibrate_threshold(plan: &ExperimentPlan) -> Result<CalibrationReport> {
    let n = plan.trials_per_cell;
    if n < MIN_CALIBRATION_TRIALS {
        return Err(Error::InsufficientTrials(format!(
            "calibration needs at least {MIN_CALIBRATION_TRIALS} trials per hypothesis, got {n}"
        )));
    }
    let trials = detection_trials(plan, n, NullSchedule::Alternate)?;
    let bits = plan.payload_lengths[0];
    let h1: Vec<f64> = trials.iter().map(|t| t.h1).collect();
    let h0_wrong_key: Vec<f64> = trials.iter().filter_map(|t| t.wrong_key).collect();
    let h0_unmarked: Vec<f64> = trials.iter().filter_map(|t| t.unmarked).collect();
    let h0: Vec<f64> = h0_unmarked.iter().chain(&h0_wrong_key).copied().collect();
    let chosen = select_threshold(&h1, &h0, bits, plan.target_fpr);
    Ok(CalibrationReport {
        payload_bits: bits,
        alpha: plan.alphas[0],
        target_fpr: plan.target_fpr,
        reference_tau: plan.tau,
        h1,
        h0_unmarked,
        h0_wrong_key,
        tau_star: chosen.map(|c| c.0),
        fpr_at_tau_star: chosen.map(|c| c.1),
        fnr_at_tau_star: chosen.map(|c| c.2),
    })
}
