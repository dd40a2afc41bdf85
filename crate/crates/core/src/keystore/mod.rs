//! Owner-side state: the user registry, persisted reference records and
//! verification of suspect audio against them.

mod container;
mod registry;

use std::path::{Path, PathBuf};

pub use container::{
    decode_mel, decode_record, encode_mel, encode_record, read_mel_file, write_atomic,
    write_mel_file, CONTAINER_VERSION, MEL_MAGIC, RECORD_MAGIC,
};
pub use registry::{Registry, UserEntry, REGISTRY_HEADER};

use crate::audio::Waveform;
use crate::dsp::mel_spectrogram;
use crate::error::{Error, Result};
use crate::watermark::{align, extract, ReferenceRecord, VerificationResult, DEFAULT_MAX_SHIFT};

/// File extension of stored reference records.
pub const RECORD_EXTENSION: &str = "msrf";

/// Utterance ids double as file names: ASCII letters, digits, `.`, `_` and
/// `-`, not starting with `.`, at most 128 characters.
pub fn validate_utterance_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "utterance id {id:?} must be 1-128 characters of [A-Za-z0-9._-] not starting with '.'"
        )))
    }
}

/// Directory of reference records, one `<utterance_id>.msrf` file each.
#[derive(Debug, Clone)]
pub struct ReferenceStore {
    dir: PathBuf,
}

impl ReferenceStore {
    /// Opens (creating if needed) the store directory.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record_path(&self, utterance_id: &str) -> Result<PathBuf> {
        validate_utterance_id(utterance_id)?;
        Ok(self.dir.join(format!("{utterance_id}.{RECORD_EXTENSION}")))
    }

    /// Writes the record atomically, replacing any previous record of the
    /// same utterance.
    pub fn store(&self, rec: &ReferenceRecord) -> Result<PathBuf> {
        if rec.utterance_id != rec.meta.utterance_id {
            return Err(Error::InvalidConfig(format!(
                "record id {:?} differs from metadata id {:?}",
                rec.utterance_id, rec.meta.utterance_id
            )));
        }
        let path = self.record_path(&rec.utterance_id)?;
        write_atomic(&path, &encode_record(rec)?)?;
        Ok(path)
    }

    pub fn load(&self, utterance_id: &str) -> Result<ReferenceRecord> {
        let path = self.record_path(utterance_id)?;
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::RecordNotFound(utterance_id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let rec = decode_record(&bytes, &path)?;
        if rec.utterance_id != utterance_id {
            return Err(Error::CorruptContainer {
                path,
                reason: format!("holds utterance {:?}", rec.utterance_id),
            });
        }
        Ok(rec)
    }

    pub fn contains(&self, utterance_id: &str) -> bool {
        self.record_path(utterance_id).is_ok_and(|p| p.is_file())
    }

    /// Utterance ids of all stored records, sorted.
    pub fn list(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == RECORD_EXTENSION) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

/// Verifies a suspect waveform against the stored record of
/// `utterance_id`, using the key and payload of `claimed_user`.
///
/// The suspect's Mel spectrogram is computed with the record's Mel
/// configuration, aligned to the reference within
/// [`DEFAULT_MAX_SHIFT`] frames and decoded; the decision is
/// `BitAcc >= tau`. The key id stored in the record must still resolve in
/// the registry. Nothing on disk is modified.
pub fn verify_suspect(
    store: &ReferenceStore,
    registry: &Registry,
    utterance_id: &str,
    claimed_user: &str,
    suspect: &Waveform,
    tau: f64,
) -> Result<VerificationResult> {
    let record = store.load(utterance_id)?;
    registry.require(&record.meta.key_id)?;
    let claimed = registry.require(claimed_user)?;
    verify_with_record(&record, claimed, suspect, tau)
}

/// [`verify_suspect`] with the record and the claimed user already
/// resolved.
pub fn verify_with_record(
    record: &ReferenceRecord,
    claimed: &UserEntry,
    suspect: &Waveform,
    tau: f64,
) -> Result<VerificationResult> {
    let cfg = record.meta.mel_config;
    if suspect.sample_rate() != cfg.sample_rate {
        return Err(Error::SampleRateMismatch {
            expected: cfg.sample_rate,
            got: suspect.sample_rate(),
        });
    }
    let x_det = mel_spectrogram(suspect, &cfg)?;
    let aligned = align(&x_det, &record.x_ref, DEFAULT_MAX_SHIFT)?;
    extract(&aligned.aligned, record, &claimed.key, Some(&claimed.payload), tau)
}
