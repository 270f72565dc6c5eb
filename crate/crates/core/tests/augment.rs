mod common;

use ndarray::{s, Array3, Array4, Axis};
use proptest::prelude::*;
use rand::Rng;

use emgtype_core::augment::{
    acm_apply, acm_sample_masks, acm_sample_masks_with_count, draw_mask, roll_axis, shift_band,
    temporal_jitter, AcmConfig, BandMask, JitterConfig, MaskStage, MaskValue, RotateChannels,
};
use emgtype_core::frontend::{aggregate_rsg, build_band_map, Spectrogram};
use emgtype_core::{FeatureTensor, RawEmgWindow};

fn random_window(seed: u64, len: usize) -> RawEmgWindow {
    let mut r = common::rng(seed);
    RawEmgWindow::new(Array3::from_shape_fn((len, 2, 16), |_| r.random_range(-1.0..1.0)), 2000).unwrap()
}

fn random_features(seed: u64, t: usize, f: usize) -> FeatureTensor {
    let mut r = common::rng(seed);
    FeatureTensor(Array4::from_shape_fn((t, 2, 16, f), |_| r.random_range(-3.0..3.0)))
}

#[test]
fn jitter_offsets_are_uniform() {
    let cfg = JitterConfig::default();
    let max = cfg.max_offset_samples(2000) as i64;
    assert_eq!(max, 120);
    let w = RawEmgWindow::zeros(200);
    let bins = (2 * max + 1) as usize;
    let mut counts = vec![0usize; bins];
    let draws = 100 * bins / 2;
    for seed in 0..draws as u64 {
        let (_, offsets) = temporal_jitter(&w, &cfg, seed).unwrap();
        for o in offsets {
            assert!(o.abs() <= max);
            counts[(o + max) as usize] += 1;
        }
    }
    let expected = (2 * draws) as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9th percentile of chi-square with 240 degrees of freedom is about 316
    assert!(chi2 < 316.0, "chi-square {chi2}");
}

#[test]
fn jitter_shifts_each_hand_by_its_offset() {
    let w = random_window(1, 400);
    let (out, offsets) = temporal_jitter(&w, &JitterConfig::default(), 77).unwrap();
    for (band, &o) in offsets.iter().enumerate() {
        for t in 0..400i64 {
            let from = t - o;
            let expect = if (0..400).contains(&from) {
                w.samples.slice(s![from as usize, band, ..]).to_owned()
            } else {
                ndarray::Array1::zeros(16)
            };
            assert_eq!(out.samples.slice(s![t as usize, band, ..]), expect);
        }
    }
}

#[test]
fn jitter_larger_than_window_rejected() {
    assert!(temporal_jitter(&RawEmgWindow::zeros(50), &JitterConfig::default(), 0).is_err());
}

#[test]
fn masks_respect_batch_gate() {
    let cfg = AcmConfig::default();
    let mut seen = [0usize; 3];
    for batch in 0..300 {
        let real = acm_sample_masks(&cfg, batch, 4, 32, 9).unwrap();
        assert!(real.applied || real.n_masks == 0);
        seen[real.n_masks] += 1;
        for sample in &real.masks {
            assert_eq!(sample.len(), 32);
            assert!(sample.iter().all(|e| e.len() == real.n_masks));
        }
    }
    assert!(seen.iter().all(|&c| c > 0), "{seen:?}");
}

#[test]
fn pre_aggregation_masking_commutes_with_rsg() {
    let map = build_band_map();
    let full = random_features(5, 6, 33);
    let real = acm_sample_masks_with_count(&AcmConfig::default(), 2, 0, 1, 32, 4).unwrap();
    let pre = AcmConfig {
        stage: MaskStage::PreAggregation,
        ..AcmConfig::default()
    };
    let agg = |x: FeatureTensor| {
        aggregate_rsg(&Spectrogram { values: x, n_fft: 64, hop: 16 }, &map).unwrap().values
    };
    let a = agg(acm_apply(&full, real.sample(0), &pre, &map).unwrap());
    let b = acm_apply(&agg(full), real.sample(0), &AcmConfig::default(), &map).unwrap();
    assert_eq!(a, b);
}

#[test]
fn out_of_range_mask_rejected() {
    let x = random_features(1, 3, 6);
    let mut masks = vec![Vec::new(); 32];
    masks[0].push(BandMask { start: 4, width: 3 });
    assert!(acm_apply(&x, &masks, &AcmConfig::default(), &build_band_map()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_has_an_inverse(seed in 0u64..1000, offset in -1i64..=1) {
        let w = random_window(seed, 20);
        prop_assert_eq!(w.rotate_channels(offset).unwrap().rotate_channels(-offset).unwrap(), w.clone());
        let x = random_features(seed, 3, 6);
        prop_assert_eq!(x.rotate_channels(offset).unwrap().rotate_channels(-offset).unwrap(), x);
    }

    #[test]
    fn rotation_matches_index_rule(seed in 0u64..1000, offset in -1i64..=1) {
        let w = random_window(seed, 5);
        let r = w.rotate_channels(offset).unwrap();
        for c in 0..16usize {
            let src = (c as i64 - offset).rem_euclid(16) as usize;
            prop_assert_eq!(r.samples.slice(s![.., .., c]), w.samples.slice(s![.., .., src]));
        }
    }

    #[test]
    fn roll_composes(seed in 0u64..1000, a in -20i64..20, b in -20i64..20) {
        let x = random_features(seed, 2, 6).0;
        let twice = roll_axis(&roll_axis(&x, Axis(2), a), Axis(2), b);
        prop_assert_eq!(twice, roll_axis(&x, Axis(2), a + b));
    }

    #[test]
    fn shift_band_round_trips_inside(seed in 0u64..1000, offset in -30i64..30) {
        let w = random_window(seed, 100);
        let back = shift_band(&shift_band(&w, 1, offset), 1, -offset);
        let keep = 100 - offset.unsigned_abs() as usize;
        let (lo, hi) = if offset >= 0 { (0, keep) } else { (100 - keep, 100) };
        prop_assert_eq!(back.samples.slice(s![lo..hi, 1, ..]), w.samples.slice(s![lo..hi, 1, ..]));
        prop_assert_eq!(back.samples.slice(s![.., 0, ..]), w.samples.slice(s![.., 0, ..]));
    }

    #[test]
    fn masking_is_idempotent(seed in 0u64..1000, n in 0usize..=2, mean in any::<bool>()) {
        let cfg = AcmConfig {
            mask_value: if mean { MaskValue::PerSampleFeatureMean } else { MaskValue::Zero },
            ..AcmConfig::default()
        };
        let map = build_band_map();
        let x = random_features(seed, 8, 6);
        let real = acm_sample_masks_with_count(&cfg, n, seed, 1, 32, 3).unwrap();
        let once = acm_apply(&x, real.sample(0), &cfg, &map).unwrap();
        let twice = acm_apply(&once, real.sample(0), &cfg, &map).unwrap();
        for (a, b) in once.0.iter().zip(twice.0.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn masking_touches_only_covered_bands(seed in 0u64..1000) {
        let cfg = AcmConfig::default();
        let map = build_band_map();
        let x = random_features(seed, 4, 6);
        let real = acm_sample_masks_with_count(&cfg, 2, seed, 1, 32, 8).unwrap();
        let out = acm_apply(&x, real.sample(0), &cfg, &map).unwrap();
        for (e, masks) in real.sample(0).iter().enumerate() {
            let (b, c) = (e / 16, e % 16);
            for f in 0..6 {
                let covered = masks.iter().any(|m| f >= m.start && f < m.start + m.width);
                let lane_out = out.0.slice(s![.., b, c, f]);
                if covered {
                    prop_assert!(lane_out.iter().all(|&v| v == 0.0));
                } else {
                    prop_assert_eq!(lane_out, x.0.slice(s![.., b, c, f]));
                }
            }
        }
    }

    #[test]
    fn drawn_masks_stay_in_range(seed in 0u64..1000, f_max in 1usize..20, bands in 1usize..10) {
        let mut r = common::rng(seed);
        for _ in 0..50 {
            let m = draw_mask(&mut r, f_max, bands);
            prop_assert!(m.width < f_max.max(1) || m.width == bands);
            prop_assert!(m.start + m.width <= bands);
        }
    }
}
