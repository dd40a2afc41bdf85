//! α/capacity sweeps and the attack robustness matrix.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::attacks::AttackSpec;
use crate::dsp::StftConfig;
use crate::error::{Error, Result};
use crate::metrics::{log_spectral_distance, snr, MeanStd};

use super::plan::{resolve_hosts, ExperimentPlan, HostSource};
use super::trial::{bit_acc_of, derive_trial_seed, embed_trial, setup_trial};

/// Header of [`SweepReport::to_csv`].
pub const SWEEP_CSV_HEADER: &str =
    "payload_bits,alpha,attack,trials,bit_acc_mean,bit_acc_std,mel_snr_db,attack_snr_db,lsd_db,status";

/// Header of [`SweepReport::to_matrix_csv`].
pub const MATRIX_CSV_HEADER: &str =
    "attack,payload_bits,alpha,trials,bit_acc_mean,bit_acc_std,attack_snr_db,lsd_db,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    /// The attack needs an external tool that is not installed.
    Skipped,
    Error,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Skipped => "skipped",
            CellStatus::Error => "error",
        }
    }
}

/// Aggregate of one (payload length, α, attack) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub payload_bits: usize,
    pub alpha: f64,
    pub attack: String,
    pub trials: usize,
    pub status: CellStatus,
    /// Per-trial bit accuracies, in trial order. Empty unless `status` is ok.
    pub bit_accs: Vec<f64>,
    pub bit_acc: Option<MeanStd>,
    /// Mean SNR of the watermarked against the clean spectrogram.
    pub mel_snr_db: Option<f64>,
    /// Mean waveform SNR of the attacked against the channel output.
    pub attack_snr_db: Option<f64>,
    pub lsd_db: Option<f64>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(SWEEP_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.payload_bits,
                r.alpha,
                r.attack,
                r.trials,
                num(r.bit_acc.map(|m| m.mean)),
                num(r.bit_acc.map(|m| m.std)),
                num(r.mel_snr_db),
                num(r.attack_snr_db),
                num(r.lsd_db),
                r.status.as_str()
            );
        }
        s
    }

    /// One row per attack, in plan order (first payload length and α of
    /// the report).
    pub fn to_matrix_csv(&self) -> String {
        let mut s = String::from(MATRIX_CSV_HEADER);
        s.push('\n');
        let Some(first) = self.rows.first() else {
            return s;
        };
        for r in self
            .rows
            .iter()
            .filter(|r| r.payload_bits == first.payload_bits && r.alpha == first.alpha)
        {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.attack,
                r.payload_bits,
                r.alpha,
                r.trials,
                num(r.bit_acc.map(|m| m.mean)),
                num(r.bit_acc.map(|m| m.std)),
                num(r.attack_snr_db),
                num(r.lsd_db),
                r.status.as_str()
            );
        }
        s
    }

    pub fn has_errors(&self) -> bool {
        self.rows.iter().any(|r| r.status == CellStatus::Error)
    }

    pub fn row(&self, payload_bits: usize, alpha: f64, attack: &str) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.payload_bits == payload_bits && r.alpha == alpha && r.attack == attack)
    }
}

enum Outcome {
    Ok { bit_acc: f64, snr_db: f64, lsd_db: f64 },
    Skipped(String),
    Failed(String),
}

struct TrialResult {
    mel_snr_db: f64,
    outcomes: Vec<Outcome>,
}

fn run_trial(
    plan: &ExperimentPlan,
    hosts: &[HostSource],
    bits: usize,
    alpha: f64,
    index: usize,
) -> Result<TrialResult> {
    let cfg = plan.mel_config();
    let seed = derive_trial_seed(plan.master_seed, "sweep", &[index as u64]);
    let setup = setup_trial(hosts, &cfg, seed, bits)?;
    let trial = embed_trial(&setup, alpha, plan.band, plan.iterations)?;
    let stft_cfg = StftConfig::default();
    let outcomes = plan
        .attacks
        .iter()
        .map(|attack| {
            let attacked = match attack.for_trial(seed).apply(&trial.audio) {
                Ok(a) => a,
                Err(Error::ToolUnavailable(t)) => {
                    return Outcome::Skipped(format!("`{t}` not available"))
                }
                Err(e) => return Outcome::Failed(e.to_string()),
            };
            let measured = (|| -> Result<Outcome> {
                Ok(Outcome::Ok {
                    bit_acc: bit_acc_of(&trial.record, &setup.owner, &attacked, plan.tau)?,
                    snr_db: snr(&trial.audio, &attacked)?,
                    lsd_db: log_spectral_distance(&trial.audio, &attacked, &stft_cfg)?,
                })
            })();
            measured.unwrap_or_else(|e| Outcome::Failed(e.to_string()))
        })
        .collect();
    Ok(TrialResult {
        mel_snr_db: trial.mel_snr_db,
        outcomes,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs every (payload length, α) cell of the plan.
///
/// Trial `i` of every cell uses the same host, key and payload prefix
/// (seeded from the master seed and `i` only), so differences between
/// cells reflect the parameters rather than resampled hosts. Each trial
/// embeds once, passes the result through the channel stand-in and then
/// applies every attack to that output. Trials run in parallel; results
/// do not depend on the thread count.
pub fn run_sweep(plan: &ExperimentPlan) -> Result<SweepReport> {
    plan.validate()?;
    let hosts = resolve_hosts(&plan.hosts, plan.sample_rate)?;
    let mut rows = Vec::new();
    for &bits in &plan.payload_lengths {
        for &alpha in &plan.alphas {
            let trials: Vec<TrialResult> = (0..plan.trials_per_cell)
                .into_par_iter()
                .map(|i| run_trial(plan, &hosts, bits, alpha, i))
                .collect::<Result<_>>()?;
            let mel_snr = mean(&trials.iter().map(|t| t.mel_snr_db).collect::<Vec<_>>());
            for (a, attack) in plan.attacks.iter().enumerate() {
                rows.push(summarize_cell(bits, alpha, attack, &trials, a, mel_snr));
            }
        }
    }
    Ok(SweepReport { rows })
}

fn summarize_cell(
    bits: usize,
    alpha: f64,
    attack: &AttackSpec,
    trials: &[TrialResult],
    a: usize,
    mel_snr: f64,
) -> SweepRow {
    let mut row = SweepRow {
        payload_bits: bits,
        alpha,
        attack: attack.label(),
        trials: trials.len(),
        status: CellStatus::Ok,
        bit_accs: Vec::new(),
        bit_acc: None,
        mel_snr_db: None,
        attack_snr_db: None,
        lsd_db: None,
        message: None,
    };
    let (mut accs, mut snrs, mut lsds) = (Vec::new(), Vec::new(), Vec::new());
    for t in trials {
        match &t.outcomes[a] {
            Outcome::Ok {
                bit_acc,
                snr_db,
                lsd_db,
            } => {
                accs.push(*bit_acc);
                snrs.push(*snr_db);
                lsds.push(*lsd_db);
            }
            Outcome::Skipped(m) => {
                row.status = CellStatus::Skipped;
                row.message = Some(m.clone());
                return row;
            }
            Outcome::Failed(m) => {
                log::error!("cell L={bits} alpha={alpha} {}: {m}", row.attack);
                row.status = CellStatus::Error;
                row.message = Some(m.clone());
                return row;
            }
        }
    }
    row.bit_acc = MeanStd::of(&accs);
    row.bit_accs = accs;
    row.mel_snr_db = Some(mel_snr);
    row.attack_snr_db = Some(mean(&snrs));
    row.lsd_db = Some(mean(&lsds));
    row
}

/// The attack matrix at a single operating point: the plan's first
/// payload length and first α, every attack.
pub fn run_robustness_matrix(plan: &ExperimentPlan) -> Result<SweepReport> {
    let mut single = plan.clone();
    single.payload_lengths.truncate(1);
    single.alphas.truncate(1);
    run_sweep(&single)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::plan::HostSpec;

    fn small_plan() -> ExperimentPlan {
        let mut p = ExperimentPlan::new(3);
        p.trials_per_cell = 2;
        p.iterations = 4;
        p.hosts = vec![HostSpec::Synthetic { seconds: 0.5 }];
        p.attacks = vec![
            AttackSpec::Identity,
            AttackSpec::AmplitudeScale { gain: 0.5 },
            AttackSpec::ExternalCodec {
                command: "no-such-codec-tool {in} {out}".into(),
                format: "mp3".into(),
            },
        ];
        p
    }

    #[test]
    fn sweep_is_deterministic_and_marks_skips() {
        let p = small_plan();
        let a = run_sweep(&p).unwrap();
        let b = run_sweep(&p).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows.len(), 3);
        assert_eq!(a.rows[2].status, CellStatus::Skipped);
        assert!(a.rows[2].bit_acc.is_none());
        assert!(!a.has_errors());
        let csv = a.to_csv();
        assert!(csv.starts_with(SWEEP_CSV_HEADER));
        assert!(csv.lines().nth(3).unwrap().ends_with(",,,,,skipped"));
        let clean = &a.rows[0];
        assert_eq!(clean.attack_snr_db, Some(crate::metrics::SNR_CAP_DB));
        assert_eq!(clean.lsd_db, Some(0.0));
    }

    #[test]
    fn matrix_uses_first_operating_point() {
        let mut p = small_plan();
        p.payload_lengths = vec![16, 32];
        p.attacks.truncate(1);
        let m = run_robustness_matrix(&p).unwrap();
        assert_eq!(m.rows.len(), 1);
        assert_eq!(m.rows[0].payload_bits, 16);
        assert_eq!(m.to_matrix_csv().lines().count(), 2);
    }
}
