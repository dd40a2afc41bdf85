//! Experiment runner: sweeps, threshold calibration and robustness tables.

pub mod calibrate;
pub mod plan;
pub mod sweep;
pub mod synth;
pub mod trial;

pub use calibrate::{
    acceptance_rate, calibrate_threshold, detection_trials, select_threshold, CalibrationReport,
    DetectionTrial, NullSchedule, HISTOGRAM_CSV_HEADER, MIN_CALIBRATION_TRIALS,
};
pub use plan::{resolve_hosts, ExperimentPlan, HostSource, HostSpec};
pub use sweep::{
    run_robustness_matrix, run_sweep, CellStatus, SweepReport, SweepRow, MATRIX_CSV_HEADER,
    SWEEP_CSV_HEADER,
};
pub use synth::speech_like;
pub use trial::{
    bit_acc_of, derive_trial_seed, embed_trial, random_user, setup_trial, EmbeddedTrial,
    TrialSetup,
};
