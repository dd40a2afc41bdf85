//! Time-frequency front end: STFT, Mel filterbank, log-Mel normalization
//! and the Mel-to-waveform synthesis channel.

mod channel;
mod mel;
mod stft;

pub use channel::{griffin_lim, mel_to_waveform, DEFAULT_ITERATIONS, PEAK_LEVEL};
pub use mel::{
    build_mel_filterbank, hz_to_mel, log_mel_raw, mel_energies, mel_spectrogram, mel_to_hz,
    normalize_log_mel, LogMelSpectrogram, MelConfig, MelFilterbank,
};
pub use stft::{stft, Stft, StftConfig, WindowKind};
pub use realfft::num_complex::Complex64;
