//! One embedding trial: host, key, payload, embedding and channel pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::Waveform;
use crate::dsp::{mel_spectrogram, mel_to_waveform, LogMelSpectrogram, MelConfig};
use crate::error::Result;
use crate::keystore::{verify_with_record, UserEntry};
use crate::metrics::snr_slices;
use crate::pattern::{fnv1a64, SecretKey, SplitMix64, KEY_LEN};
use crate::watermark::{embed, BandSelection, Payload, ReferenceRecord, WatermarkMeta};

use super::plan::HostSource;

/// Seed for one unit of work, derived from the master seed, a tag naming
/// the experiment and any number of integer coordinates.
pub fn derive_trial_seed(master_seed: u64, tag: &str, coords: &[u64]) -> u64 {
    let coord_bytes: Vec<u8> = coords.iter().flat_map(|c| c.to_le_bytes()).collect();
    let h = fnv1a64([
        master_seed.to_le_bytes().as_slice(),
        tag.as_bytes(),
        &[0u8],
        &coord_bytes,
    ]);
    SplitMix64::new(h).next_u64()
}

/// A user with a random key and payload.
pub fn random_user<R: Rng + ?Sized>(id: &str, bits: usize, rng: &mut R) -> Result<UserEntry> {
    let mut bytes = [0u8; KEY_LEN];
    rng.fill(&mut bytes);
    Ok(UserEntry {
        user_id: id.to_string(),
        key: SecretKey::new(bytes, id)?,
        payload: Payload::random(bits, rng)?,
    })
}

/// Host and owner drawn for one trial.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub seed: u64,
    pub host: Waveform,
    pub mel: LogMelSpectrogram,
    pub owner: UserEntry,
    pub utterance_id: String,
    /// Continues the trial's random stream for anything drawn later
    /// (e.g. impostor keys).
    pub rng: ChaCha8Rng,
}

/// Draws host, key and payload for a trial. The same seed always yields
/// the same host and key; payloads of different lengths share a prefix.
pub fn setup_trial(
    hosts: &[HostSource],
    cfg: &MelConfig,
    seed: u64,
    bits: usize,
) -> Result<TrialSetup> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rng.random_range(0..hosts.len());
    let host_seed: u64 = rng.random();
    let host = hosts[idx].waveform(host_seed, cfg.sample_rate)?;
    let mel = mel_spectrogram(&host, cfg)?;
    let owner = random_user("owner", bits, &mut rng)?;
    Ok(TrialSetup {
        seed,
        host,
        mel,
        owner,
        utterance_id: format!("trial-{seed:016x}"),
        rng,
    })
}

/// A trial after embedding and one pass through the channel stand-in.
#[derive(Debug, Clone)]
pub struct EmbeddedTrial {
    pub marked: LogMelSpectrogram,
    pub record: ReferenceRecord,
    /// Channel output of the watermarked spectrogram.
    pub audio: Waveform,
    /// SNR of the watermarked against the clean spectrogram.
    pub mel_snr_db: f64,
}

pub fn embed_trial(
    setup: &TrialSetup,
    alpha: f64,
    band: BandSelection,
    iterations: usize,
) -> Result<EmbeddedTrial> {
    let meta = WatermarkMeta::new(
        setup.owner.payload.len(),
        alpha,
        band,
        *setup.mel.config(),
        setup.owner.user_id.clone(),
        setup.utterance_id.clone(),
    );
    let (marked, record) = embed(&setup.mel, &setup.owner.payload, &setup.owner.key, &meta)?;
    let clean: Vec<f64> = setup.mel.values().iter().map(|&v| v as f64).collect();
    let wm: Vec<f64> = marked.values().iter().map(|&v| v as f64).collect();
    let mel_snr_db = snr_slices(&clean, &wm)?;
    let audio = mel_to_waveform(&marked, iterations)?;
    Ok(EmbeddedTrial {
        marked,
        record,
        audio,
        mel_snr_db,
    })
}

/// Bit accuracy of `audio` verified against the trial's record with
/// `claimed`'s key and payload.
pub fn bit_acc_of(
    record: &ReferenceRecord,
    claimed: &UserEntry,
    audio: &Waveform,
    tau: f64,
) -> Result<f64> {
    let res = verify_with_record(record, claimed, audio, tau)?;
    Ok(res.bit_acc.expect("expected payload supplied"))
}
