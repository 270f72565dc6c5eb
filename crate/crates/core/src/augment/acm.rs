use ndarray::s;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{BandMap, FULL_BINS, NUM_RSG_BANDS};
use crate::rng;
use crate::types::FeatureTensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskValue {
    #[default]
    Zero,
    /// Temporal mean of the masked feature within the sample.
    PerSampleFeatureMean,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStage {
    /// Masks index the six reduced bands directly.
    #[default]
    PostRsg,
    /// Masks drawn over six dummy bands are expanded to their member FFT
    /// bins on a 33-bin spectrogram.
    PreAggregation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcmConfig {
    pub apply_probability: f64,
    pub n_masks_support: Vec<usize>,
    pub f_max: usize,
    pub num_bands: usize,
    pub mask_value: MaskValue,
    pub stage: MaskStage,
}

impl Default for AcmConfig {
    fn default() -> Self {
        Self {
            apply_probability: 2.0 / 3.0,
            n_masks_support: vec![0, 1, 2],
            f_max: 12,
            num_bands: NUM_RSG_BANDS,
            mask_value: MaskValue::Zero,
            stage: MaskStage::PostRsg,
        }
    }
}

impl AcmConfig {
    /// Frequency-masking settings of the earlier joint-hand baseline, kept for
    /// comparison runs.
    pub fn mild_spec_augment() -> Self {
        Self {
            f_max: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.f_max == 0 {
            return Err(Error::InvalidConfig("f_max must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(Error::InvalidConfig("apply_probability must lie in [0, 1]".into()));
        }
        if self.num_bands == 0 {
            return Err(Error::InvalidConfig("num_bands must be at least 1".into()));
        }
        if self.n_masks_support.is_empty() {
            return Err(Error::InvalidConfig("n_masks_support is empty".into()));
        }
        Ok(())
    }
}

/// One frequency mask: `width` bands starting at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandMask {
    pub start: usize,
    pub width: usize,
}

impl BandMask {
    fn covers(&self, band: usize) -> bool {
        band >= self.start && band < self.start + self.width
    }
}

/// Masks drawn for one mini-batch, indexed `[sample][electrode]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRealization {
    pub applied: bool,
    pub n_masks: usize,
    pub num_bands: usize,
    pub masks: Vec<Vec<Vec<BandMask>>>,
}

impl MaskRealization {
    pub fn sample(&self, index: usize) -> &[Vec<BandMask>] {
        &self.masks[index]
    }
}

/// Draws one mask: `w ~ U{0..f_max-1}` clamped to the band count, then
/// `f0 ~ U{0..B-w}`.
pub fn draw_mask<R: Rng + ?Sized>(rng: &mut R, f_max: usize, num_bands: usize) -> BandMask {
    let width = rng.random_range(0..f_max).min(num_bands);
    let start = rng.random_range(0..=num_bands - width);
    BandMask { start, width }
}

/// Samples the masks of mini-batch `batch_index`. The apply gate and the
/// mask count are drawn once per mini-batch; every electrode of every sample
/// gets its own independent masks.
pub fn acm_sample_masks(
    config: &AcmConfig,
    batch_index: u64,
    n_samples: usize,
    n_electrodes: usize,
    seed: u64,
) -> Result<MaskRealization> {
    config.validate()?;
    let mut batch_rng = rng::stream(seed, &[batch_index, u64::MAX]);
    let applied = batch_rng.random_bool(config.apply_probability);
    let n_masks = if applied {
        config.n_masks_support[batch_rng.random_range(0..config.n_masks_support.len())]
    } else {
        0
    };
    acm_sample_masks_with_count(config, n_masks, batch_index, n_samples, n_electrodes, seed)
        .map(|mut r| {
            r.applied = applied;
            r
        })
}

/// Like [`acm_sample_masks`] with the mask count forced to `n_masks`.
pub fn acm_sample_masks_with_count(
    config: &AcmConfig,
    n_masks: usize,
    batch_index: u64,
    n_samples: usize,
    n_electrodes: usize,
    seed: u64,
) -> Result<MaskRealization> {
    config.validate()?;
    let masks = (0..n_samples)
        .map(|s| {
            (0..n_electrodes)
                .map(|e| {
                    let mut r = rng::stream(seed, &[batch_index, s as u64, e as u64]);
                    (0..n_masks)
                        .map(|_| draw_mask(&mut r, config.f_max, config.num_bands))
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(MaskRealization {
        applied: n_masks > 0,
        n_masks,
        num_bands: config.num_bands,
        masks,
    })
}

/// Applies one sample's masks (`[electrode][mask]`, electrode = band·16 + channel)
/// to a `[time × band × channel × freq]` tensor. Every timestep is masked.
pub fn acm_apply(
    tensor: &FeatureTensor,
    masks: &[Vec<BandMask>],
    config: &AcmConfig,
    map: &BandMap,
) -> Result<FeatureTensor> {
    let (_, bands, channels, freqs) = tensor.dim();
    let expected = match config.stage {
        MaskStage::PostRsg => config.num_bands,
        MaskStage::PreAggregation => FULL_BINS,
    };
    if freqs != expected {
        return Err(Error::shape(
            format!("{expected} frequency bins"),
            format!("{freqs} frequency bins"),
        ));
    }
    if masks.len() != bands * channels {
        return Err(Error::shape(
            format!("{} electrodes", bands * channels),
            format!("{} electrodes", masks.len()),
        ));
    }
    for m in masks.iter().flatten() {
        if m.start + m.width > config.num_bands {
            return Err(Error::MaskOutOfRange {
                start: m.start,
                width: m.width,
                bands: config.num_bands,
            });
        }
    }
    if config.stage == MaskStage::PreAggregation && config.num_bands != NUM_RSG_BANDS {
        return Err(Error::InvalidConfig(
            "pre-aggregation masking needs the six-band map".into(),
        ));
    }

    let mut out = tensor.0.clone();
    for (e, electrode_masks) in masks.iter().enumerate() {
        if electrode_masks.is_empty() {
            continue;
        }
        let (b, c) = (e / channels, e % channels);
        let bins: Vec<usize> = match config.stage {
            MaskStage::PostRsg => (0..freqs)
                .filter(|&f| electrode_masks.iter().any(|m| m.covers(f)))
                .collect(),
            MaskStage::PreAggregation => (0..freqs)
                .filter(|&f| {
                    map.band_of(f)
                        .is_some_and(|band| electrode_masks.iter().any(|m| m.covers(band)))
                })
                .collect(),
        };
        for f in bins {
            let mut lane = out.slice_mut(s![.., b, c, f]);
            let fill = match config.mask_value {
                MaskValue::Zero => 0.0,
                MaskValue::PerSampleFeatureMean => tensor
                    .0
                    .slice(s![.., b, c, f])
                    .mean()
                    .unwrap_or(0.0),
            };
            lane.fill(fill);
        }
    }
    Ok(FeatureTensor(out))
}

/// Fraction of an electrode's bands covered by the union of `masks`.
pub fn masked_fraction(masks: &[BandMask], num_bands: usize) -> f64 {
    let covered = (0..num_bands)
        .filter(|&b| masks.iter().any(|m| m.covers(b)))
        .count();
    covered as f64 / num_bands as f64
}

/// Monte-Carlo summary of the masking law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcmStatistics {
    pub draws: usize,
    /// P[some mask has full width | one mask].
    pub full_erasure_one_mask: f64,
    /// P[some mask has full width | two masks].
    pub full_width_two_masks: f64,
    /// P[union of two masks covers every band].
    pub union_erasure_two_masks: f64,
    /// Expected masked-feature fraction given the mini-batch is masked.
    pub masked_fraction_given_applied: f64,
    /// Expected masked-feature fraction over all mini-batches.
    pub masked_fraction_overall: f64,
}

/// Estimates erasure probabilities and masked-feature fractions from
/// `draws` electrode-level draws per quantity.
pub fn acm_statistics(config: &AcmConfig, draws: usize, seed: u64) -> Result<AcmStatistics> {
    config.validate()?;
    let b = config.num_bands;
    let full = |m: &BandMask| m.width == b;
    let mut r = rng::stream(seed, &[1]);
    let one = (0..draws)
        .filter(|_| full(&draw_mask(&mut r, config.f_max, b)))
        .count();

    let mut r = rng::stream(seed, &[2]);
    let (mut any_full, mut union_full) = (0usize, 0usize);
    for _ in 0..draws {
        let pair = [
            draw_mask(&mut r, config.f_max, b),
            draw_mask(&mut r, config.f_max, b),
        ];
        if pair.iter().any(full) {
            any_full += 1;
        }
        if masked_fraction(&pair, b) == 1.0 {
            union_full += 1;
        }
    }

    let mut r = rng::stream(seed, &[3]);
    let (mut applied_sum, mut applied_n, mut overall_sum) = (0.0, 0usize, 0.0);
    let mut masks = Vec::new();
    for _ in 0..draws {
        if !r.random_bool(config.apply_probability) {
            continue;
        }
        let n = config.n_masks_support[r.random_range(0..config.n_masks_support.len())];
        masks.clear();
        masks.extend((0..n).map(|_| draw_mask(&mut r, config.f_max, b)));
        let frac = masked_fraction(&masks, b);
        applied_sum += frac;
        applied_n += 1;
        overall_sum += frac;
    }
    let d = draws as f64;
    Ok(AcmStatistics {
        draws,
        full_erasure_one_mask: one as f64 / d,
        full_width_two_masks: any_full as f64 / d,
        union_erasure_two_masks: union_full as f64 / d,
        masked_fraction_given_applied: if applied_n > 0 {
            applied_sum / applied_n as f64
        } else {
            0.0
        },
        masked_fraction_overall: overall_sum / d,
    })
}
