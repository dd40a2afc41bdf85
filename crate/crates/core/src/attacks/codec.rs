//! Round trip through an external encoder/decoder.

use std::path::Path;
use std::process::Command;

use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;

use super::resample::resample;
use crate::audio::{read_wav, write_wav, WavEncoding, Waveform};
use crate::error::{Error, Result};

/// Largest encoder/decoder delay, in samples, searched when realigning the
/// decoded signal.
pub const MAX_CODEC_LAG: usize = 4096;

/// MP3 at 128 kbit/s through ffmpeg.
pub const MP3_128_TEMPLATE: &str = "ffmpeg -nostdin -y -loglevel error -i {in} -b:a 128k {enc} \
     && ffmpeg -nostdin -y -loglevel error -i {enc} -ac 1 {out}";

/// AAC at 96 kbit/s through ffmpeg.
pub const AAC_96_TEMPLATE: &str = "ffmpeg -nostdin -y -loglevel error -i {in} -c:a aac -b:a 96k {enc} \
     && ffmpeg -nostdin -y -loglevel error -i {enc} -ac 1 {out}";

/// First word of the template, i.e. the program that has to be on `PATH`.
pub fn program_name(template: &str) -> Option<&str> {
    template.split_whitespace().next()
}

/// True when `program` resolves to an executable file.
pub fn tool_available(program: &str) -> bool {
    if program.contains('/') {
        return Path::new(program).is_file();
    }
    std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|dir| dir.join(program).is_file()))
        .unwrap_or(false)
}

fn quote(path: &Path) -> String {
    format!("'{}'", path.display().to_string().replace('\'', r"'\''"))
}

/// Runs `template` through `sh -c` after substituting `{in}` (the source
/// WAV), `{out}` (where the decoded WAV must be written) and `{enc}` (a
/// scratch path with extension `format`). Paths are single-quoted.
///
/// The decoded signal is resampled to the source rate if needed, realigned
/// by cross-correlation within [`MAX_CODEC_LAG`] samples, and trimmed or
/// zero-padded to the source length.
pub fn external_codec(w: &Waveform, template: &str, format: &str) -> Result<Waveform> {
    let program = program_name(template)
        .ok_or_else(|| Error::InvalidAttack("empty codec command".into()))?;
    if !tool_available(program) {
        return Err(Error::ToolUnavailable(program.to_string()));
    }

    let dir = tempfile::tempdir()?;
    let input = dir.path().join("in.wav");
    let output = dir.path().join("out.wav");
    let ext = if format.is_empty() { "bin" } else { format };
    let encoded = dir.path().join(format!("encoded.{ext}"));
    write_wav(&input, w, WavEncoding::Float32)?;

    let command = template
        .replace("{in}", &quote(&input))
        .replace("{out}", &quote(&output))
        .replace("{enc}", &quote(&encoded));
    let status = Command::new("sh").arg("-c").arg(&command).output()?;
    if !status.status.success() {
        return Err(Error::Codec(format!(
            "`{program}` exited with {}: {}",
            status.status,
            String::from_utf8_lossy(&status.stderr).trim()
        )));
    }
    let decoded =
        read_wav(&output).map_err(|e| Error::Codec(format!("unreadable codec output: {e}")))?;

    let mut samples = resample(&decoded.to_f64(), decoded.sample_rate(), w.sample_rate());
    let reference = w.to_f64();
    let lag = best_lag(&reference, &samples, MAX_CODEC_LAG);
    if lag > 0 {
        samples.drain(..(lag as usize).min(samples.len()));
    } else if lag < 0 {
        samples.splice(0..0, std::iter::repeat_n(0.0, lag.unsigned_abs()));
    }
    samples.resize(reference.len(), 0.0);
    Waveform::from_f64(&samples, w.sample_rate())
}

/// Lag `l` in `[-max_lag, max_lag]` maximizing `Σ a[n] b[n + l]`. Ties go to
/// the smallest |l|.
pub fn best_lag(a: &[f64], b: &[f64], max_lag: usize) -> isize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let n = (a.len() + b.len()).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let spectrum = |x: &[f64]| {
        let mut buf = vec![0.0; n];
        buf[..x.len()].copy_from_slice(x);
        let mut out = fwd.make_output_vec();
        fwd.process(&mut buf, &mut out).expect("fft length");
        out
    };
    let fa = spectrum(a);
    let fb = spectrum(b);
    let mut prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
    prod[0].im = 0.0;
    if let Some(last) = prod.last_mut() {
        last.im = 0.0;
    }
    let mut xc = vec![0.0; n];
    inv.process(&mut prod, &mut xc).expect("fft length");

    let at = |lag: isize| -> f64 {
        let idx = if lag >= 0 { lag as usize } else { n - lag.unsigned_abs() };
        xc[idx]
    };
    let max_lag = max_lag.min(n / 2 - 1) as isize;
    let mut best = 0isize;
    let mut best_val = at(0);
    for mag in 1..=max_lag {
        for lag in [mag, -mag] {
            let v = at(lag);
            if v > best_val * (1.0 + 1e-12) + 1e-300 {
                best = lag;
                best_val = v;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_of_shifted_noise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..5000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; 37];
        b.extend_from_slice(&a);
        assert_eq!(best_lag(&a, &b, 100), 37);
        assert_eq!(best_lag(&b, &a, 100), -37);
        assert_eq!(best_lag(&a, &a, 100), 0);
    }

    #[test]
    fn missing_tool_is_reported() {
        let w = Waveform::silence(100, 22050).unwrap();
        let err = external_codec(&w, "surely-not-a-real-codec-binary {in} {out}", "mp3");
        assert!(matches!(err, Err(Error::ToolUnavailable(_))));
    }

    #[test]
    fn copy_template_is_identity() {
        if !tool_available("cp") {
            return;
        }
        let samples: Vec<f32> = (0..3000).map(|i| ((i as f32) * 0.01).sin() * 0.5).collect();
        let w = Waveform::new(samples, 22050).unwrap();
        let out = external_codec(&w, "cp {in} {out}", "wav").unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn failing_command_is_a_codec_error() {
        let w = Waveform::silence(100, 22050).unwrap();
        assert!(matches!(external_codec(&w, "false {in}", ""), Err(Error::Codec(_))));
    }
}
