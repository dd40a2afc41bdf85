pub mod attacks;
pub mod audio;
pub mod dsp;
pub mod error;
pub mod harness;
pub mod keystore;
pub mod metrics;
pub mod pattern;
pub mod watermark;

pub use audio::Waveform;
pub use error::{Error, Result};
