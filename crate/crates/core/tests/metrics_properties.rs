use melmark::dsp::StftConfig;
use melmark::metrics::{aggregate, log_spectral_distance, snr, QualityReport};
use melmark::Waveform;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn white(seed: u64, n: usize) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..n).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    Waveform::from_f64(&v, 22050).unwrap()
}

#[test]
fn white_noise_lsd_is_stable_across_seeds() {
    let cfg = StftConfig::default();
    let values: Vec<f64> = (0..10)
        .map(|s| log_spectral_distance(&white(2 * s, 22050), &white(2 * s + 1, 22050), &cfg).unwrap())
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    assert!(mean > 0.0 && mean.is_finite());
    for v in &values {
        assert!((v - mean).abs() <= 0.1 * mean, "{v} vs mean {mean}");
    }
}

#[test]
fn thousand_null_rows_average_to_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let reports: Vec<QualityReport> = (0..1000)
        .map(|_| {
            let agree = (0..32).filter(|_| rng.random_bool(0.5)).count();
            QualityReport {
                attack_label: "h0".into(),
                snr_db: 20.0,
                lsd_db: 1.0,
                bit_acc: Some(agree as f64 / 32.0),
            }
        })
        .collect();
    let rows = aggregate(&reports).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].count, 1000);
    let mean = rows[0].bit_acc.unwrap().mean;
    assert!((0.45..=0.55).contains(&mean), "{mean}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn snr_falls_as_noise_grows(seed in any::<u64>(), a in 0.001f64..0.2, factor in 1.01f64..5.0) {
        let reference = white(seed, 4096);
        let noise = white(seed ^ 0xabcd, 4096).to_f64();
        let at = |g: f64| {
            let y: Vec<f64> = reference.to_f64().iter().zip(&noise).map(|(x, n)| x + g * n).collect();
            snr(&reference, &Waveform::from_f64(&y, 22050).unwrap()).unwrap()
        };
        prop_assert!(at(a * factor) < at(a));
    }

    #[test]
    fn lsd_is_symmetric_and_nonnegative(seed in any::<u64>(), gain in 0.1f64..1.0) {
        let cfg = StftConfig::default();
        let a = white(seed, 4096);
        let b = Waveform::from_f64(
            &white(seed.wrapping_add(1), 4096).to_f64().iter().map(|v| v * gain).collect::<Vec<_>>(),
            22050,
        ).unwrap();
        let ab = log_spectral_distance(&a, &b, &cfg).unwrap();
        let ba = log_spectral_distance(&b, &a, &cfg).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
        prop_assert_eq!(log_spectral_distance(&a, &a, &cfg).unwrap(), 0.0);
    }
}
