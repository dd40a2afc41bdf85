//! Keyed ±1 spreading patterns.
//!
//! The generator is fixed bit-exactly so that an embedder and a verifier
//! built from different code bases regenerate identical patterns:
//!
//! 1. The seed is the 64-bit FNV-1a hash of
//!    `key_bytes ‖ 0x00 ‖ utf8(utterance_id) ‖ 0x00 ‖ le_u32(bit_index)`.
//! 2. The seed initializes a SplitMix64 generator. Each 64-bit output is
//!    consumed least-significant bit first; bit `b` becomes `2b - 1`.
//! 3. Entries fill the matrix in row-major order.
//!
//! The construction is not a cryptographic PRF. It provides key dependence,
//! not secrecy against an adversary who can observe many patterns.

use std::fmt;

use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub const KEY_LEN: usize = 16;
pub const MAX_KEY_ID_LEN: usize = 64;

/// 128-bit secret key plus a printable identifier.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    bytes: [u8; KEY_LEN],
    id: String,
}

impl SecretKey {
    pub fn new(bytes: [u8; KEY_LEN], id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        validate_identifier(&id, MAX_KEY_ID_LEN).map_err(Error::InvalidKey)?;
        Ok(Self { bytes, id })
    }

    pub fn from_slice(bytes: &[u8], id: impl Into<String>) -> Result<Self> {
        let arr: [u8; KEY_LEN] = bytes.try_into().map_err(|_| {
            Error::InvalidKey(format!("expected {KEY_LEN} key bytes, got {}", bytes.len()))
        })?;
        Self::new(arr, id)
    }

    pub fn from_hex(hex: &str, id: impl Into<String>) -> Result<Self> {
        if hex.len() != 2 * KEY_LEN || !hex.is_ascii() {
            return Err(Error::InvalidKey(format!(
                "expected {} hex digits, got {:?}",
                2 * KEY_LEN,
                hex.len()
            )));
        }
        let mut bytes = [0u8; KEY_LEN];
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
                .map_err(|e| Error::InvalidKey(format!("bad hex: {e}")))?;
        }
        Self::new(bytes, id)
    }

    pub fn bytes(&self) -> &[u8; KEY_LEN] {
        &self.bytes
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn to_hex(&self) -> String {
        self.bytes.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretKey")
            .field("id", &self.id)
            .field("bytes", &"<redacted>")
            .finish()
    }
}

/// Nonempty, at most `max` chars, printable ASCII without whitespace.
pub(crate) fn validate_identifier(id: &str, max: usize) -> std::result::Result<(), String> {
    if id.is_empty() {
        return Err("identifier must not be empty".into());
    }
    if id.chars().count() > max {
        return Err(format!("identifier longer than {max} characters"));
    }
    if !id.chars().all(|c| c.is_ascii_graphic()) {
        return Err(format!("identifier {id:?} must be printable ASCII without spaces"));
    }
    Ok(())
}

/// 64-bit FNV-1a over a sequence of byte slices.
pub fn fnv1a64<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> u64 {
    let mut h = FNV_OFFSET;
    for part in parts {
        for &b in part {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// Seed for bit `j` of an utterance.
pub fn derive_seed(key: &SecretKey, utterance_id: &str, bit_index: u32) -> u64 {
    fnv1a64([
        key.bytes.as_slice(),
        &[0u8],
        utterance_id.as_bytes(),
        &[0u8],
        &bit_index.to_le_bytes(),
    ])
}

/// SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// A `rows × cols` matrix of ±1 entries carrying one payload bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpreadingPattern {
    entries: Vec<i8>,
    rows: usize,
    cols: usize,
    bit_index: u32,
}

impl SpreadingPattern {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bit_index(&self) -> u32 {
        self.bit_index
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.entries[row * self.cols + col]
    }

    /// Row-major signed bytes (`0x01` or `0xff`).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.entries.iter().map(|&e| e as u8).collect()
    }

    /// Normalized inner product with another pattern of the same shape.
    pub fn correlation(&self, other: &SpreadingPattern) -> f64 {
        assert_eq!(self.entries.len(), other.entries.len());
        let dot: i64 = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| (a as i64) * (b as i64))
            .sum();
        dot as f64 / self.entries.len() as f64
    }

    pub fn mean(&self) -> f64 {
        let s: i64 = self.entries.iter().map(|&e| e as i64).sum();
        s as f64 / self.entries.len() as f64
    }
}

/// Generates the spreading pattern for bit `j`.
///
/// # Panics
///
/// Panics if `rows` or `cols` is zero.
pub fn gen_pattern(
    key: &SecretKey,
    utterance_id: &str,
    bit_index: u32,
    rows: usize,
    cols: usize,
) -> SpreadingPattern {
    assert!(rows >= 1 && cols >= 1, "pattern shape must be positive");
    let n = rows * cols;
    let mut rng = SplitMix64::new(derive_seed(key, utterance_id, bit_index));
    let mut entries = Vec::with_capacity(n);
    while entries.len() < n {
        let word = rng.next_u64();
        let take = (n - entries.len()).min(64);
        entries.extend((0..take).map(|b| if (word >> b) & 1 == 1 { 1i8 } else { -1i8 }));
    }
    SpreadingPattern {
        entries,
        rows,
        cols,
        bit_index,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(b: u8) -> SecretKey {
        SecretKey::new([b; KEY_LEN], "k").unwrap()
    }

    #[test]
    fn fnv_reference_vectors() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64([b"".as_slice()]), 0xcbf29ce484222325);
        assert_eq!(fnv1a64([b"a".as_slice()]), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64([b"foobar".as_slice()]), 0x85944171f73967e8);
        assert_eq!(fnv1a64([b"foo".as_slice(), b"bar"]), 0x85944171f73967e8);
    }

    #[test]
    fn splitmix_reference_vector() {
        // First outputs for seed 0 of the reference SplitMix64.
        let mut r = SplitMix64::new(0);
        assert_eq!(r.next_u64(), 0xe220a8397b1dcdaf);
        assert_eq!(r.next_u64(), 0x6e789e6aa1b965f4);
    }

    #[test]
    fn one_by_one_is_stable() {
        let a = gen_pattern(&key(7), "utt", 0, 1, 1);
        let b = gen_pattern(&key(7), "utt", 0, 1, 1);
        assert_eq!(a, b);
        assert!(a.entries()[0] == 1 || a.entries()[0] == -1);
    }

    #[test]
    fn seed_depends_on_every_input() {
        let k = key(1);
        let s = derive_seed(&k, "u", 0);
        assert_eq!(s, derive_seed(&k, "u", 0));
        assert_ne!(s, derive_seed(&k, "u", 1));
        assert_ne!(s, derive_seed(&k, "v", 0));
        assert_ne!(s, derive_seed(&key(2), "u", 0));
    }

    #[test]
    fn key_validation() {
        assert!(SecretKey::new([0; 16], "").is_err());
        assert!(SecretKey::new([0; 16], "a b").is_err());
        assert!(SecretKey::new([0; 16], "x".repeat(65)).is_err());
        assert!(SecretKey::from_slice(&[0; 15], "k").is_err());
        let k = SecretKey::from_hex("000102030405060708090a0b0c0d0e0f", "k").unwrap();
        assert_eq!(k.to_hex(), "000102030405060708090a0b0c0d0e0f");
        assert!(!format!("{k:?}").contains("0a0b"));
    }

    #[test]
    fn fill_order_is_row_major_lsb_first() {
        let k = key(3);
        let p = gen_pattern(&k, "x", 5, 3, 30);
        let mut rng = SplitMix64::new(derive_seed(&k, "x", 5));
        let w0 = rng.next_u64();
        let w1 = rng.next_u64();
        for i in 0..90 {
            let bit = if i < 64 { (w0 >> i) & 1 } else { (w1 >> (i - 64)) & 1 };
            assert_eq!(p.get(i / 30, i % 30), if bit == 1 { 1 } else { -1 });
        }
    }
}
