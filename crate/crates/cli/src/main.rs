//! `melmark` command-line tool.
//!
//! Exit codes: 0 success / accepted, 1 rejected, 2 usage error, 3 I/O
//! error, 4 domain error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use melmark::attacks::{AttackSpec, MP3_128_TEMPLATE};
use melmark::audio::{read_wav, write_wav, WavEncoding};
use melmark::dsp::{mel_spectrogram, mel_to_waveform, LogMelSpectrogram, MelConfig, DEFAULT_ITERATIONS};
use melmark::harness::{calibrate_threshold, run_robustness_matrix, run_sweep, ExperimentPlan};
use melmark::keystore::{
    decode_mel, decode_record, read_mel_file, verify_suspect, write_mel_file, Registry,
    ReferenceStore, MEL_MAGIC, RECORD_MAGIC, REGISTRY_HEADER,
};
use melmark::pattern::fnv1a64;
use melmark::watermark::{embed, BandSelection, WatermarkMeta, DEFAULT_TAU};
use melmark::Error;

/// Environment variable holding the command template used by `codec`
/// attacks that do not name one.
const CODEC_ENV: &str = "MELMARK_CODEC_CMD";

const EXIT_REJECT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DOMAIN: u8 = 4;

#[derive(Parser)]
#[command(name = "melmark", version, about = "Keyed watermarking of log-Mel spectrograms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a registered user's payload into a WAV or Mel file.
    Embed(EmbedArgs),
    /// Check a suspect WAV against a stored reference record.
    Verify(VerifyArgs),
    /// Apply one distortion to a WAV file.
    Attack(AttackArgs),
    /// Run an alpha/capacity sweep and write a CSV summary.
    Sweep(SweepArgs),
    /// Calibrate the acceptance threshold from H0/H1 trials.
    Calibrate(CalibrateArgs),
    /// Add a user with a fresh key and payload to a registry.
    Register(RegisterArgs),
    /// Describe a WAV, Mel, reference-record or registry file.
    Info(InfoArgs),
}

#[derive(Args)]
struct StoreArgs {
    /// Directory of reference records.
    #[arg(long)]
    store: PathBuf,
    /// Registry file [default: <store>/registry.txt].
    #[arg(long)]
    registry: Option<PathBuf>,
}

impl StoreArgs {
    fn registry_path(&self) -> PathBuf {
        self.registry
            .clone()
            .unwrap_or_else(|| self.store.join("registry.txt"))
    }
}

#[derive(Args)]
struct EmbedArgs {
    /// Input WAV or Mel container.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    user: String,
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    /// Expected payload length; must match the user's registered payload.
    #[arg(long)]
    bits: Option<usize>,
    /// Inclusive Mel band range.
    #[arg(long, default_value = "20:55", value_parser = parse_band)]
    band: BandSelection,
    /// Utterance id [default: derived from the input name and content].
    #[arg(long)]
    utterance: Option<String>,
    /// Phase-recovery iterations of the synthesis channel.
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    /// Synthesized watermarked WAV.
    #[arg(long)]
    out: PathBuf,
    /// Also write the watermarked Mel spectrogram.
    #[arg(long)]
    out_mel: Option<PathBuf>,
    /// Write 32-bit float samples instead of 16-bit PCM.
    #[arg(long)]
    float: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    utterance: String,
    /// Claimed owner.
    #[arg(long)]
    user: String,
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// `kind[:key=value,...]`, e.g. `noise:snr_db=20,seed=1`,
    /// `lowpass:cutoff_hz=3000`, `scale:gain=0.7`, `echo`,
    /// `codec:format=mp3` (command from $MELMARK_CODEC_CMD).
    #[arg(long)]
    attack: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    float: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Plan file [default: bundled sweep plan].
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Only the first payload length and alpha, one row per attack.
    #[arg(long)]
    matrix: bool,
    /// Override the plan's trials per cell.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Plan file [default: bundled calibration plan].
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Histogram CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["registry", "store"]))]
struct RegisterArgs {
    #[arg(long)]
    user: String,
    #[arg(long, default_value_t = 32)]
    bits: usize,
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Use <store>/registry.txt.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Seed for key and payload sampling [default: OS entropy].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

fn parse_band(s: &str) -> Result<BandSelection, String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let lo: usize = lo.trim().parse().map_err(|e| format!("bad band start: {e}"))?;
    let hi: usize = hi.trim().parse().map_err(|e| format!("bad band end: {e}"))?;
    if lo > hi {
        return Err(format!("band start {lo} exceeds end {hi}"));
    }
    Ok(BandSelection::new(lo, hi + 1))
}

/// Parses an attack, filling in the codec command from the environment
/// (or the MP3 default) when it is not given.
fn parse_attack(s: &str) -> melmark::Result<AttackSpec> {
    let (kind, params) = s.split_once(':').unwrap_or((s, ""));
    if !matches!(kind.trim(), "codec" | "external_codec") {
        return s.parse();
    }
    let mut format = "mp3".to_string();
    let mut command = None;
    for pair in params.split(',').filter(|p| !p.trim().is_empty()) {
        match pair.split_once('=') {
            Some(("format", v)) => format = v.trim().to_string(),
            Some(("command", v)) => command = Some(v.to_string()),
            _ => return Err(Error::InvalidAttack(format!("unexpected codec parameter `{pair}`"))),
        }
    }
    let command = command
        .or_else(|| std::env::var(CODEC_ENV).ok())
        .unwrap_or_else(|| MP3_128_TEMPLATE.to_string());
    Ok(AttackSpec::ExternalCodec { command, format })
}

fn encoding(float: bool) -> WavEncoding {
    if float {
        WavEncoding::Float32
    } else {
        WavEncoding::Pcm16
    }
}

fn sniff(path: &Path) -> melmark::Result<Vec<u8>> {
    std::fs::read(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn load_mel_input(path: &Path) -> melmark::Result<LogMelSpectrogram> {
    let bytes = sniff(path)?;
    if bytes.starts_with(MEL_MAGIC) {
        decode_mel(&bytes, path)
    } else {
        let w = read_wav(path)?;
        mel_spectrogram(&w, &MelConfig::for_sample_rate(w.sample_rate()))
    }
}

fn default_utterance_id(input: &Path, user: &str, x: &LogMelSpectrogram, alpha: f64) -> String {
    let stem: String = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .take(64)
        .collect();
    let values: Vec<u8> = x.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    let h = fnv1a64([user.as_bytes(), &[0], &alpha.to_le_bytes(), &values]);
    let stem = if stem.is_empty() { "utt".into() } else { stem };
    format!("{stem}-{:08x}", h as u32)
}

fn cmd_embed(a: EmbedArgs) -> melmark::Result<u8> {
    let registry = Registry::load(a.store.registry_path())?;
    let entry = registry.require(&a.user)?;
    if let Some(bits) = a.bits {
        if bits != entry.payload.len() {
            return Err(Error::InvalidPayload(format!(
                "user `{}` has a {}-bit payload, --bits asked for {bits}",
                a.user,
                entry.payload.len()
            )));
        }
    }
    let x = load_mel_input(&a.input)?;
    let utterance = a
        .utterance
        .unwrap_or_else(|| default_utterance_id(&a.input, &a.user, &x, a.alpha));
    let store = ReferenceStore::open(&a.store.store)?;
    // Fail on a bad id before doing any work.
    store.record_path(&utterance)?;

    let meta = WatermarkMeta::new(
        entry.payload.len(),
        a.alpha,
        a.band,
        *x.config(),
        entry.key.id(),
        utterance.clone(),
    );
    let (marked, record) = embed(&x, &entry.payload, &entry.key, &meta)?;
    let audio = mel_to_waveform(&marked, a.iterations)?;
    store.store(&record)?;
    write_wav(&a.out, &audio, encoding(a.float))?;
    if let Some(p) = &a.out_mel {
        write_mel_file(p, &marked)?;
    }
    println!("{utterance}");
    Ok(0)
}

fn cmd_verify(a: VerifyArgs) -> melmark::Result<u8> {
    let registry = Registry::load(a.store.registry_path())?;
    let store = ReferenceStore::open(&a.store.store)?;
    sniff(&a.input)?;
    let suspect = read_wav(&a.input)?;
    let res = verify_suspect(&store, &registry, &a.utterance, &a.user, &suspect, a.tau)?;
    println!(
        "decision={} bit_acc={:.4} bits={} tau={} mean_confidence={:.6} min_confidence={:.6} utterance={} user={}",
        if res.accepted { "accept" } else { "reject" },
        res.bit_acc.unwrap_or(f64::NAN),
        res.scores.len(),
        a.tau,
        res.mean_confidence(),
        res.min_confidence(),
        a.utterance,
        a.user
    );
    Ok(if res.accepted { 0 } else { EXIT_REJECT })
}

fn cmd_attack(a: AttackArgs) -> melmark::Result<u8> {
    let spec = parse_attack(&a.attack)?;
    sniff(&a.input)?;
    let w = read_wav(&a.input)?;
    let out = spec.apply(&w)?;
    write_wav(&a.out, &out, encoding(a.float))?;
    eprintln!("applied {}", spec.label());
    Ok(0)
}

fn load_plan(path: Option<&Path>, fallback: fn() -> ExperimentPlan) -> melmark::Result<ExperimentPlan> {
    match path {
        Some(p) => ExperimentPlan::load(p),
        None => Ok(fallback()),
    }
}

fn cmd_sweep(a: SweepArgs) -> melmark::Result<u8> {
    let mut plan = load_plan(a.plan.as_deref(), ExperimentPlan::default_sweep)?;
    if let Some(t) = a.trials {
        plan.trials_per_cell = t;
    }
    let report = if a.matrix {
        run_robustness_matrix(&plan)?
    } else {
        run_sweep(&plan)?
    };
    let csv = if a.matrix {
        report.to_matrix_csv()
    } else {
        report.to_csv()
    };
    std::fs::write(&a.out, csv)?;
    for r in report.rows.iter().filter(|r| r.message.is_some()) {
        eprintln!(
            "{} L={} alpha={} {}: {}",
            r.status.as_str(),
            r.payload_bits,
            r.alpha,
            r.attack,
            r.message.as_deref().unwrap_or("")
        );
    }
    eprintln!("wrote {} rows to {}", report.rows.len(), a.out.display());
    Ok(if report.has_errors() { EXIT_DOMAIN } else { 0 })
}

fn cmd_calibrate(a: CalibrateArgs) -> melmark::Result<u8> {
    let mut plan = load_plan(a.plan.as_deref(), ExperimentPlan::default_calibration)?;
    if let Some(t) = a.trials {
        plan.trials_per_cell = t;
    }
    let report = calibrate_threshold(&plan)?;
    std::fs::write(&a.out, report.histogram_csv())?;
    print!("{}", report.summary());
    Ok(0)
}

fn cmd_register(a: RegisterArgs) -> melmark::Result<u8> {
    let path = match (&a.registry, &a.store) {
        (Some(r), _) => r.clone(),
        (None, Some(s)) => {
            std::fs::create_dir_all(s)?;
            s.join("registry.txt")
        }
        (None, None) => unreachable!("clap enforces one of --registry/--store"),
    };
    let mut registry = Registry::open(&path)?;
    let mut rng = match a.seed {
        Some(s) => ChaCha8Rng::seed_from_u64(s),
        None => ChaCha8Rng::from_os_rng(),
    };
    let entry = registry.register_user(&a.user, a.bits, &mut rng)?;
    println!("user={} bits={} payload={}", entry.user_id, entry.payload.len(), entry.payload);
    Ok(0)
}

fn cmd_info(a: InfoArgs) -> melmark::Result<u8> {
    let bytes = sniff(&a.input)?;
    if bytes.starts_with(RECORD_MAGIC) {
        let r = decode_record(&bytes, &a.input)?;
        let m = &r.meta;
        println!("type=reference_record");
        println!("utterance={}", r.utterance_id);
        println!("key_id={}", m.key_id);
        println!("payload_bits={}", m.payload_bits);
        println!("alpha={}", m.alpha);
        println!("headroom={}", m.headroom);
        println!("band={}:{}", m.band.c_min, m.band.c_max - 1);
        println!("bands={} frames={}", r.x_ref.num_bands(), r.x_ref.num_frames());
        println!("sample_rate={}", m.mel_config.sample_rate);
        println!("created_at={}", r.created_at);
    } else if bytes.starts_with(MEL_MAGIC) {
        let x = read_mel_file(&a.input)?;
        println!("type=mel");
        println!("bands={} frames={}", x.num_bands(), x.num_frames());
        println!("sample_rate={}", x.config().sample_rate);
    } else if bytes.starts_with(b"RIFF") {
        let w = read_wav(&a.input)?;
        println!("type=wav");
        println!("sample_rate={}", w.sample_rate());
        println!("samples={}", w.len());
        println!("duration_s={:.3}", w.duration_secs());
        println!("rms={:.6} peak={:.6}", w.rms(), w.peak());
    } else if bytes.starts_with(REGISTRY_HEADER.as_bytes()) {
        let r = Registry::load(&a.input)?;
        println!("type=registry");
        println!("users={}", r.len());
        if let Some(b) = r.payload_bits() {
            println!("payload_bits={b}");
        }
        for e in r.entries() {
            println!("user={} bits={}", e.user_id, e.payload.len());
        }
    } else {
        return Err(Error::InvalidConfig(format!(
            "{}: unrecognized file type",
            a.input.display()
        )));
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Embed(a) => cmd_embed(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Register(a) => cmd_register(a),
        Command::Info(a) => cmd_info(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { EXIT_IO } else { EXIT_DOMAIN })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_is_inclusive() {
        assert_eq!(parse_band("20:55").unwrap(), BandSelection::new(20, 56));
        assert!(parse_band("30:20").is_err());
        assert!(parse_band("20").is_err());
    }

    #[test]
    fn codec_attack_defaults() {
        let a = parse_attack("codec:format=m4a,command=cp {in} {out}").unwrap();
        assert_eq!(
            a,
            AttackSpec::ExternalCodec {
                command: "cp {in} {out}".into(),
                format: "m4a".into()
            }
        );
        assert!(parse_attack("codec:bitrate=3").is_err());
        assert_eq!(
            parse_attack("scale:gain=0.5").unwrap(),
            AttackSpec::AmplitudeScale { gain: 0.5 }
        );
    }
}
