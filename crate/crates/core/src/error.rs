use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("input too short: need at least {needed} samples, got {got}")]
    InsufficientInput { needed: usize, got: usize },

    #[error("mel filter {band} has no nonzero weight (too many bands for the FFT resolution)")]
    DegenerateFilter { band: usize },

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("invalid key: {0}")]
    InvalidKey(String),

    #[error("invalid payload: {0}")]
    InvalidPayload(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("band {c_min}..{c_max} is out of range for {num_bands} mel bands")]
    BandOutOfRange {
        c_min: usize,
        c_max: usize,
        num_bands: usize,
    },

    #[error("mel configuration of the suspect does not match the reference")]
    MelConfigMismatch,

    #[error("frame count mismatch: reference has {reference}, suspect has {suspect}")]
    FrameCountMismatch { reference: usize, suspect: usize },

    #[error("alignment failed: {0}")]
    AlignmentFailed(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {got} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },

    #[error("invalid attack: {0}")]
    InvalidAttack(String),

    #[error("external tool `{0}` is not available")]
    ToolUnavailable(String),

    #[error("codec attack failed: {0}")]
    Codec(String),

    #[error("user `{0}` already registered")]
    DuplicateUser(String),

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("no reference record for utterance `{0}`")]
    RecordNotFound(String),

    #[error("corrupt container {path}: {reason}")]
    CorruptContainer { path: PathBuf, reason: String },

    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),

    #[error("insufficient trials: {0}")]
    InsufficientTrials(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the filesystem or an external process
    /// rather than by the data being processed.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Wav(hound::Error::IoError(_))
                | Error::ToolUnavailable(_)
                | Error::Codec(_)
        )
    }
}
