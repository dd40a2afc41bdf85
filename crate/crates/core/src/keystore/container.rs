//! Binary containers for reference records and plain Mel spectrograms.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic[4] | version u16 | meta_len u32 | meta (UTF-8 JSON) |
//! C u32 | M u32 | C·M f32 values, row-major | CRC32 of all prior bytes
//! ```
//!
//! Reference records use magic `MSRF`, Mel files `MSML`. The checksum is
//! verified before anything else is parsed.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dsp::{LogMelSpectrogram, MelConfig};
use crate::error::{Error, Result};
use crate::watermark::{ReferenceRecord, WatermarkMeta};

pub const RECORD_MAGIC: &[u8; 4] = b"MSRF";
pub const MEL_MAGIC: &[u8; 4] = b"MSML";
pub const CONTAINER_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct RecordHeader {
    utterance_id: String,
    created_at: u64,
    meta: WatermarkMeta,
}

#[derive(Serialize, Deserialize)]
struct MelHeader {
    mel_config: MelConfig,
}

fn encode(magic: &[u8; 4], meta_json: &[u8], values: &Array2<f32>) -> Vec<u8> {
    let (rows, cols) = values.dim();
    let mut out = Vec::with_capacity(4 + 2 + 4 + meta_json.len() + 8 + 4 * rows * cols + 4);
    out.extend_from_slice(magic);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(meta_json);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in values.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::CorruptContainer {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| self.corrupt("unexpected end of data"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Returns the meta JSON and value matrix after checking checksum, magic
/// and version.
fn decode<'a>(bytes: &'a [u8], magic: &[u8; 4], path: &'a Path) -> Result<(&'a [u8], Array2<f32>)> {
    let corrupt = |reason: &str| Error::CorruptContainer {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    if bytes.len() < 4 + 2 + 4 + 8 + 4 {
        return Err(corrupt("file too short"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader {
        bytes: body,
        pos: 0,
        path,
    };
    if r.take(4)? != magic {
        return Err(corrupt("bad magic"));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let meta_len = r.u32()? as usize;
    let meta = r.take(meta_len)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let count = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| corrupt("dimensions overflow"))?;
    let data = r.take(count)?;
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }
    let values: Vec<f32> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = Array2::from_shape_vec((rows, cols), values).map_err(|e| corrupt(&e.to_string()))?;
    Ok((meta, values))
}

pub fn encode_record(rec: &ReferenceRecord) -> Result<Vec<u8>> {
    let header = RecordHeader {
        utterance_id: rec.utterance_id.clone(),
        created_at: rec.created_at,
        meta: rec.meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(encode(RECORD_MAGIC, &json, &rec.x_ref.values().to_owned()))
}

/// `path` is only used in error messages.
pub fn decode_record(bytes: &[u8], path: &Path) -> Result<ReferenceRecord> {
    let (meta, values) = decode(bytes, RECORD_MAGIC, path)?;
    let corrupt = |reason: String| Error::CorruptContainer {
        path: path.to_path_buf(),
        reason,
    };
    let header: RecordHeader =
        serde_json::from_slice(meta).map_err(|e| corrupt(format!("bad metadata: {e}")))?;
    let x_ref = LogMelSpectrogram::new(values, header.meta.mel_config)
        .map_err(|e| corrupt(format!("bad spectrogram: {e}")))?;
    Ok(ReferenceRecord {
        utterance_id: header.utterance_id,
        x_ref,
        meta: header.meta,
        created_at: header.created_at,
    })
}

pub fn encode_mel(x: &LogMelSpectrogram) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(&MelHeader {
        mel_config: *x.config(),
    })
    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(encode(MEL_MAGIC, &json, &x.values().to_owned()))
}

pub fn decode_mel(bytes: &[u8], path: &Path) -> Result<LogMelSpectrogram> {
    let (meta, values) = decode(bytes, MEL_MAGIC, path)?;
    let corrupt = |reason: String| Error::CorruptContainer {
        path: path.to_path_buf(),
        reason,
    };
    let header: MelHeader =
        serde_json::from_slice(meta).map_err(|e| corrupt(format!("bad metadata: {e}")))?;
    LogMelSpectrogram::new(values, header.mel_config)
        .map_err(|e| corrupt(format!("bad spectrogram: {e}")))
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_mel_file(path: &Path, x: &LogMelSpectrogram) -> Result<()> {
    write_atomic(path, &encode_mel(x)?)
}

pub fn read_mel_file(path: &Path) -> Result<LogMelSpectrogram> {
    decode_mel(&std::fs::read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::watermark::BandSelection;

    fn record() -> ReferenceRecord {
        let cfg = MelConfig::default();
        let values = Array2::from_shape_fn((80, 7), |(c, t)| ((c * 31 + t * 7) % 97) as f32 / 96.0);
        ReferenceRecord {
            utterance_id: "utt-1".into(),
            x_ref: LogMelSpectrogram::new(values, cfg).unwrap(),
            meta: WatermarkMeta::new(32, 0.25, BandSelection::default(), cfg, "alice", "utt-1"),
            created_at: 1_700_000_000,
        }
    }

    #[test]
    fn record_round_trip_is_exact() {
        let rec = record();
        let bytes = encode_record(&rec).unwrap();
        assert_eq!(&bytes[..4], RECORD_MAGIC);
        let back = decode_record(&bytes, Path::new("x")).unwrap();
        assert_eq!(back, rec);
        assert_eq!(encode_record(&back).unwrap(), bytes);
    }

    #[test]
    fn damage_is_detected() {
        let bytes = encode_record(&record()).unwrap();
        let p = Path::new("x");
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                decode_record(&bytes[..cut], p),
                Err(Error::CorruptContainer { .. })
            ));
        }
        let mut flipped = bytes.clone();
        flipped[bytes.len() / 2] ^= 0x10;
        assert!(matches!(decode_record(&flipped, p), Err(Error::CorruptContainer { .. })));
        // A valid mel container is not a record.
        let mel = encode_mel(&record().x_ref).unwrap();
        assert!(decode_record(&mel, p).is_err());
        assert_eq!(decode_mel(&mel, p).unwrap(), record().x_ref);
    }
}
