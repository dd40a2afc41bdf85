use std::collections::BTreeMap;
use std::path::Path;

use melmark::dsp::{mel_spectrogram, mel_to_waveform, MelConfig};
use melmark::harness::speech_like;
use melmark::keystore::{verify_suspect, ReferenceStore, Registry};
use melmark::watermark::{embed, BandSelection, ReferenceRecord, WatermarkMeta};
use melmark::{Error, Waveform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Exact `P[Bin(n, 1/2) >= k]` by summing binomial coefficients.
fn half_tail(n: u64, k: u64) -> f64 {
    let mut c = 1.0f64;
    let mut total = 0.0;
    for i in 0..=n {
        if i >= k {
            total += c;
        }
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    total / 2f64.powi(n as i32)
}

struct Fixture {
    store: ReferenceStore,
    registry: Registry,
    marked_audio: Waveform,
    clean_audio: Waveform,
}

fn fixture(dir: &Path, bits: usize, impostors: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut registry = Registry::in_memory().with_payload_bits(bits);
    registry.register_user("alice", bits, &mut rng).unwrap();
    for i in 0..impostors {
        registry.register_user(&format!("user{i}"), bits, &mut rng).unwrap();
    }
    let store = ReferenceStore::open(dir).unwrap();
    let cfg = MelConfig::default();
    let host = speech_like(seed, 2.0, 22050).unwrap();
    let x = mel_spectrogram(&host, &cfg).unwrap();
    let alice = registry.require("alice").unwrap();
    let meta = WatermarkMeta::new(bits, 0.25, BandSelection::default(), cfg, "alice", "utt-1");
    let (marked, record) = embed(&x, &alice.payload, &alice.key, &meta).unwrap();
    store.store(&record).unwrap();
    Fixture {
        store,
        marked_audio: mel_to_waveform(&marked, 32).unwrap(),
        clean_audio: mel_to_waveform(&x, 32).unwrap(),
        registry,
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

#[test]
fn legitimate_claim_is_accepted_without_touching_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), 32, 0, 1);
    let before = snapshot(dir.path());
    assert_eq!(before.keys().collect::<Vec<_>>(), ["utt-1.msrf"]);
    let res = verify_suspect(&f.store, &f.registry, "utt-1", "alice", &f.marked_audio, 0.61).unwrap();
    assert!(res.accepted);
    assert!(res.bit_acc.unwrap() >= 0.95);
    assert_eq!(snapshot(dir.path()), before);
}

#[test]
fn wrong_claims_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    // Long payloads make chance acceptance negligible at τ = 0.61.
    let f = fixture(dir.path(), 256, 200, 2);
    let accepted = (0..200)
        .filter(|i| {
            verify_suspect(&f.store, &f.registry, "utt-1", &format!("user{i}"), &f.marked_audio, 0.61)
                .unwrap()
                .accepted
        })
        .count();
    assert!(accepted <= 2, "{accepted}/200 wrong claims accepted");
}

#[test]
fn short_payload_wrong_claims_follow_the_binomial_tail() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), 32, 200, 3);
    let rate = (0..200)
        .filter(|i| {
            verify_suspect(&f.store, &f.registry, "utt-1", &format!("user{i}"), &f.marked_audio, 0.61)
                .unwrap()
                .accepted
        })
        .count() as f64
        / 200.0;
    let p = half_tail(32, 20);
    let sd = (p * (1.0 - p) / 200.0).sqrt();
    assert!((rate - p).abs() <= 3.0 * sd, "rate {rate}, tail {p}");
}

#[test]
fn unwatermarked_audio_scores_at_chance() {
    let mut accs = Vec::new();
    for seed in 10..20 {
        let dir = tempfile::tempdir().unwrap();
        let f = fixture(dir.path(), 32, 20, seed);
        for i in 0..20 {
            let res = verify_suspect(&f.store, &f.registry, "utt-1", &format!("user{i}"), &f.clean_audio, 0.61)
                .unwrap();
            accs.push(res.bit_acc.unwrap());
        }
        let res = verify_suspect(&f.store, &f.registry, "utt-1", "alice", &f.clean_audio, 0.61).unwrap();
        accs.push(res.bit_acc.unwrap());
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((0.45..=0.55).contains(&mean), "{mean}");
}

#[test]
fn lookup_failures_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), 32, 0, 4);
    assert!(matches!(
        verify_suspect(&f.store, &f.registry, "utt-2", "alice", &f.marked_audio, 0.61),
        Err(Error::RecordNotFound(_))
    ));
    assert!(matches!(
        verify_suspect(&f.store, &f.registry, "utt-1", "mallory", &f.marked_audio, 0.61),
        Err(Error::UnknownUser(_))
    ));
    // The record's own key id must still resolve.
    let stranger = Registry::in_memory();
    assert!(matches!(
        verify_suspect(&f.store, &stranger, "utt-1", "alice", &f.marked_audio, 0.61),
        Err(Error::UnknownUser(_))
    ));
}

#[test]
fn truncated_records_fail_the_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), 32, 0, 5);
    let rec: ReferenceRecord = f.store.load("utt-1").unwrap();
    let path = f.store.record_path("utt-1").unwrap();
    let bytes = std::fs::read(&path).unwrap();
    for cut in [bytes.len() - 1, bytes.len() / 2, 10] {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        assert!(matches!(f.store.load("utt-1"), Err(Error::CorruptContainer { .. })), "cut {cut}");
    }
    std::fs::write(&path, &bytes).unwrap();
    assert_eq!(f.store.load("utt-1").unwrap(), rec);
}

#[test]
fn thousand_registrations_persist_without_collisions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("registry.txt");
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut reg = Registry::open(&path).unwrap().with_payload_bits(32);
    for i in 0..1000 {
        reg.register_user(&format!("u{i:04}"), 32, &mut rng).unwrap();
    }
    let collisions = reg.payload_collisions();
    if collisions > 0 {
        eprintln!("{collisions} payload collisions among 1000 users");
    }
    assert!(collisions <= 1);
    let loaded = Registry::load(&path).unwrap();
    assert_eq!(loaded.entries(), reg.entries());
    // Only the registry itself remains; temporary files are renamed away.
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}
