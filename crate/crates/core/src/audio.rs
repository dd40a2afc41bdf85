//! Mono waveforms and WAV file I/O.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// A mono waveform with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    /// Builds a waveform, clamping samples into `[-1, 1]`.
    ///
    /// Fails on non-finite samples or a zero sample rate.
    pub fn new(mut samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidWaveform(format!("non-finite sample at index {i}")));
        }
        for s in &mut samples {
            *s = s.clamp(-1.0, 1.0);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Builds a waveform from `f64` samples, clamping into `[-1, 1]`.
    pub fn from_f64(samples: &[f64], sample_rate: u32) -> Result<Self> {
        Self::new(samples.iter().map(|&s| s as f32).collect(), sample_rate)
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64).collect()
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let energy: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        (energy / self.samples.len() as f64).sqrt()
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    /// Returns a copy truncated or zero-padded to exactly `len` samples.
    pub fn with_len(&self, len: usize) -> Waveform {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Waveform {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

/// Sample encoding used when writing WAV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    #[default]
    Pcm16,
    Float32,
}

/// Reads a mono WAV file (16-bit PCM or 32-bit float). The sample rate is
/// taken as-is.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let reader = WavReader::open(path)?;
    read_from(reader)
}

pub fn read_wav_from<R: std::io::Read>(reader: R) -> Result<Waveform> {
    read_from(WavReader::new(reader)?)
}

fn read_from<R: std::io::Read>(mut reader: WavReader<R>) -> Result<Waveform> {
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::InvalidWaveform(format!(
            "expected mono audio, got {} channels",
            spec.channels
        )));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader.samples::<f32>().collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::InvalidWaveform(format!(
                "unsupported sample format {fmt:?} with {bits} bits"
            )))
        }
    };
    Waveform::new(samples, spec.sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform, encoding: WavEncoding) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_wav_to(file, wave, encoding)
}

pub fn write_wav_to<W: std::io::Write + std::io::Seek>(
    writer: W,
    wave: &Waveform,
    encoding: WavEncoding,
) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => SampleFormat::Int,
            WavEncoding::Float32 => SampleFormat::Float,
        },
    };
    let mut w = WavWriter::new(writer, spec)?;
    match encoding {
        WavEncoding::Pcm16 => {
            for &s in &wave.samples {
                w.write_sample((s * 32767.0).round().clamp(-32768.0, 32767.0) as i16)?;
            }
        }
        WavEncoding::Float32 => {
            for &s in &wave.samples {
                w.write_sample(s)?;
            }
        }
    }
    w.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn rejects_non_finite() {
        assert!(Waveform::new(vec![0.0, f32::NAN], 8000).is_err());
        assert!(Waveform::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn clamps_out_of_range() {
        let w = Waveform::new(vec![2.0, -3.0, 0.5], 8000).unwrap();
        assert_eq!(w.samples(), &[1.0, -1.0, 0.5]);
    }

    #[test]
    fn float_wav_round_trip_is_exact() {
        let w = Waveform::new(vec![0.1, -0.25, 0.999, 0.0], 22050).unwrap();
        let mut buf = Cursor::new(Vec::new());
        write_wav_to(&mut buf, &w, WavEncoding::Float32).unwrap();
        buf.set_position(0);
        let back = read_wav_from(buf).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let w = Waveform::new(vec![0.1, -0.25, 0.5, 0.0], 16000).unwrap();
        let mut buf = Cursor::new(Vec::new());
        write_wav_to(&mut buf, &w, WavEncoding::Pcm16).unwrap();
        buf.set_position(0);
        let back = read_wav_from(buf).unwrap();
        assert_eq!(back.sample_rate(), 16000);
        for (a, b) in back.samples().iter().zip(w.samples()) {
            assert!((a - b).abs() < 1.0 / 32767.0);
        }
    }

    #[test]
    fn rejects_stereo() {
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = WavWriter::new(&mut buf, spec).unwrap();
            w.write_sample(0i16).unwrap();
            w.write_sample(0i16).unwrap();
            w.finalize().unwrap();
        }
        buf.set_position(0);
        assert!(matches!(read_wav_from(buf), Err(Error::InvalidWaveform(_))));
    }
}
