//! Registry of users and their message–key pairs.
//!
//! Stored as a line-oriented text file:
//!
//! ```text
//! # melmark-registry v1
//! # payload_bits=32
//! alice<TAB>00112233445566778899aabbccddeeff<TAB>0110...
//! ```
//!
//! The `payload_bits` line is optional; when present every entry must have
//! that payload length. Fields are tab-separated: user id, hex key, payload
//! bit string. Each user's key id is the user id.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::Rng;

use super::container::write_atomic;
use crate::error::{Error, Result};
use crate::pattern::{validate_identifier, SecretKey, KEY_LEN, MAX_KEY_ID_LEN};
use crate::watermark::Payload;

pub const REGISTRY_HEADER: &str = "# melmark-registry v1";

#[derive(Debug, Clone, PartialEq)]
pub struct UserEntry {
    pub user_id: String,
    pub key: SecretKey,
    pub payload: Payload,
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    path: Option<PathBuf>,
    payload_bits: Option<usize>,
    entries: Vec<UserEntry>,
}

impl Registry {
    /// Empty registry that lives only in memory.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Requires every entry to carry an `bits`-bit payload.
    pub fn with_payload_bits(mut self, bits: usize) -> Self {
        self.payload_bits = Some(bits);
        self
    }

    /// Opens the registry at `path`, starting empty if the file does not
    /// exist yet. Changes are written back on every registration.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reg = if path.exists() {
            Self::parse(&std::fs::read_to_string(path)?, path)?
        } else {
            Self::default()
        };
        reg.path = Some(path.to_path_buf());
        Ok(reg)
    }

    /// Loads an existing registry file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reg = Self::parse(&std::fs::read_to_string(path)?, path)?;
        reg.path = Some(path.to_path_buf());
        Ok(reg)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let corrupt = |line: usize, reason: String| Error::CorruptContainer {
            path: path.to_path_buf(),
            reason: format!("line {line}: {reason}"),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == REGISTRY_HEADER => {}
            _ => return Err(corrupt(1, "missing registry header".into())),
        }
        let mut reg = Self::default();
        for (i, line) in lines {
            let n = i + 1;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("payload_bits=") {
                    let bits = v.parse().map_err(|_| corrupt(n, format!("bad payload_bits {v:?}")))?;
                    reg.payload_bits = Some(bits);
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [user, key, bits] = fields[..] else {
                return Err(corrupt(n, format!("expected 3 fields, got {}", fields.len())));
            };
            let key = SecretKey::from_hex(key, user).map_err(|e| corrupt(n, e.to_string()))?;
            let payload = Payload::from_bit_string(bits).map_err(|e| corrupt(n, e.to_string()))?;
            reg.insert(UserEntry {
                user_id: user.to_string(),
                key,
                payload,
            })
            .map_err(|e| corrupt(n, e.to_string()))?;
        }
        Ok(reg)
    }

    /// File contents in the on-disk format.
    pub fn to_text(&self) -> String {
        let mut s = String::from(REGISTRY_HEADER);
        s.push('\n');
        if let Some(bits) = self.payload_bits {
            s.push_str(&format!("# payload_bits={bits}\n"));
        }
        for e in &self.entries {
            s.push_str(&format!(
                "{}\t{}\t{}\n",
                e.user_id,
                e.key.to_hex(),
                e.payload.to_bit_string()
            ));
        }
        s
    }

    pub fn save(&self) -> Result<()> {
        match &self.path {
            Some(p) => write_atomic(p, self.to_text().as_bytes()),
            None => Ok(()),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn payload_bits(&self) -> Option<usize> {
        self.payload_bits
    }

    fn insert(&mut self, entry: UserEntry) -> Result<()> {
        if self.get(&entry.user_id).is_some() {
            return Err(Error::DuplicateUser(entry.user_id));
        }
        if let Some(bits) = self.payload_bits {
            if entry.payload.len() != bits {
                return Err(Error::InvalidPayload(format!(
                    "registry requires {bits}-bit payloads, got {}",
                    entry.payload.len()
                )));
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Draws a fresh key and an `bits`-bit payload for `user_id` from `rng`,
    /// adds the entry and persists the registry.
    pub fn register_user<R: Rng + ?Sized>(
        &mut self,
        user_id: &str,
        bits: usize,
        rng: &mut R,
    ) -> Result<&UserEntry> {
        validate_identifier(user_id, MAX_KEY_ID_LEN).map_err(Error::InvalidKey)?;
        if self.get(user_id).is_some() {
            return Err(Error::DuplicateUser(user_id.to_string()));
        }
        let mut bytes = [0u8; KEY_LEN];
        rng.fill(&mut bytes);
        let key = SecretKey::new(bytes, user_id)?;
        let payload = Payload::random(bits, rng)?;
        if let Some(other) = self.entries.iter().find(|e| e.payload == payload) {
            log::warn!(
                "payload of new user `{user_id}` collides with `{}`",
                other.user_id
            );
        }
        self.insert(UserEntry {
            user_id: user_id.to_string(),
            key,
            payload,
        })?;
        self.save()?;
        Ok(self.entries.last().expect("just inserted"))
    }

    pub fn get(&self, user_id: &str) -> Option<&UserEntry> {
        self.entries.iter().find(|e| e.user_id == user_id)
    }

    /// Entry for `user_id`, or [`Error::UnknownUser`].
    pub fn require(&self, user_id: &str) -> Result<&UserEntry> {
        self.get(user_id)
            .ok_or_else(|| Error::UnknownUser(user_id.to_string()))
    }

    pub fn entries(&self) -> &[UserEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of entries whose payload equals an earlier entry's.
    pub fn payload_collisions(&self) -> usize {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|e| !seen.insert(e.payload.clone()))
            .count()
    }
}
