mod common;

use ndarray::{s, Array3, Array4};
use proptest::prelude::*;

use emgtype_core::frontend::{
    aggregate_rsg, build_band_map, frame_count, stft_logpower, Spectrogram, StftConfig, StreamingStft,
};
use emgtype_core::{Error, FeatureTensor, RawEmgWindow};

fn window_from(values: &[f32]) -> RawEmgWindow {
    let mut w = RawEmgWindow::zeros(values.len());
    for (n, &v) in values.iter().enumerate() {
        w.samples.slice_mut(s![n, .., ..]).fill(v);
        w.samples[[n, 1, 3]] = -v;
    }
    w
}

#[test]
fn band_map_matches_center_frequency_rule() {
    let map = build_band_map();
    for f in 0..33 {
        assert_eq!(map.band_of(f), common::band_of_bin(f), "bin {f}");
    }
    assert_eq!(map.populations(), [2, 2, 4, 4, 10, 10]);
}

#[test]
fn frames_follow_hop_count() {
    for len in [1, 15, 16, 17, 2000, 2001] {
        let spec = stft_logpower(&RawEmgWindow::zeros(len), &StftConfig::default()).unwrap();
        assert_eq!(spec.frames(), len.div_ceil(16));
        assert_eq!(frame_count(len, 16), len.div_ceil(16));
    }
}

#[test]
fn invalid_configs_rejected() {
    let w = RawEmgWindow::zeros(64);
    let hop0 = StftConfig { hop: 0, ..StftConfig::default() };
    assert!(matches!(stft_logpower(&w, &hop0), Err(Error::InvalidHop)));
    let short = StftConfig { n_fft: 8, hop: 16, ..StftConfig::default() };
    assert!(matches!(stft_logpower(&w, &short), Err(Error::InvalidFftSize(8))));
}

#[test]
fn rsg_requires_full_resolution() {
    let spec = Spectrogram {
        values: FeatureTensor::zeros(3, 2, 16, 6),
        n_fft: 64,
        hop: 16,
    };
    assert!(aggregate_rsg(&spec, &build_band_map()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_direct_dft(values in prop::collection::vec(-3.0f32..3.0, 1..300)) {
        let spec = stft_logpower(&window_from(&values), &StftConfig::default()).unwrap();
        let x: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        for t in 0..spec.frames() {
            let oracle = common::dft_frame(&x, t);
            for f in 0..33 {
                prop_assert!((spec.values.0[[t, 0, 0, f]] - oracle[f]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn later_samples_do_not_move_earlier_frames(
        values in prop::collection::vec(-3.0f32..3.0, 32..400),
        at in 0usize..400,
        bump in 0.5f32..4.0,
    ) {
        let at = at % values.len();
        let base = stft_logpower(&window_from(&values), &StftConfig::default()).unwrap();
        let mut moved = values.clone();
        moved[at] += bump;
        let pert = stft_logpower(&window_from(&moved), &StftConfig::default()).unwrap();
        for t in 0..base.frames() {
            let last_sample = 16 * t + 15;
            if last_sample < at {
                prop_assert_eq!(
                    base.values.0.slice(s![t, .., .., ..]),
                    pert.values.0.slice(s![t, .., .., ..])
                );
            }
        }
    }

    #[test]
    fn streaming_equals_batch(
        values in prop::collection::vec(-3.0f32..3.0, 1..500),
        chunks in prop::collection::vec(1usize..70, 1..20),
    ) {
        let w = window_from(&values);
        let cfg = StftConfig::default();
        let batch = stft_logpower(&w, &cfg).unwrap();
        let mut st = StreamingStft::new(&cfg, 2, 16).unwrap();
        let mut frames: Vec<Array3<f64>> = Vec::new();
        let (mut start, mut i) = (0, 0);
        while start < w.len() {
            let end = (start + chunks[i % chunks.len()]).min(w.len());
            frames.extend(st.push(w.samples.slice(s![start..end, .., ..])));
            start = end;
            i += 1;
        }
        frames.extend(st.finish());
        prop_assert_eq!(frames.len(), batch.frames());
        for (t, f) in frames.iter().enumerate() {
            prop_assert_eq!(f.view(), batch.values.0.slice(s![t, .., .., ..]));
        }
    }

    #[test]
    fn rsg_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        use rand::Rng;
        let mut r = common::rng(seed);
        let x = Array4::from_shape_fn((4, 2, 16, 33), |_| r.random_range(-5.0..5.0));
        let y = Array4::from_shape_fn((4, 2, 16, 33), |_| r.random_range(-5.0..5.0));
        let map = build_band_map();
        let agg = |v: Array4<f64>| {
            aggregate_rsg(&Spectrogram { values: FeatureTensor(v), n_fft: 64, hop: 16 }, &map)
                .unwrap()
                .values
                .0
        };
        let lhs = agg(&x * a + &y * b);
        let rhs = agg(x) * a + agg(y) * b;
        for (l, r) in lhs.iter().zip(&rhs) {
            prop_assert!((l - r).abs() < 1e-9);
        }
    }
}
