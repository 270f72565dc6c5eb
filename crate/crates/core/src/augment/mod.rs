//! Training-time augmentations: aggressive channel masking, electrode
//! rotation and per-hand temporal jitter.

mod acm;

use ndarray::{Array, Axis, Dimension, RemoveAxis};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use acm::{
    acm_apply, acm_sample_masks, acm_sample_masks_with_count, acm_statistics, draw_mask,
    masked_fraction, AcmConfig, AcmStatistics, BandMask, MaskRealization, MaskStage, MaskValue,
};

use crate::error::{Error, Result};
use crate::rng;
use crate::types::{FeatureTensor, RawEmgWindow};

/// Cyclic roll along `axis`: `out[i] = in[(i − offset) mod n]`.
pub fn roll_axis<A: Clone, D: Dimension + RemoveAxis>(
    a: &Array<A, D>,
    axis: Axis,
    offset: i64,
) -> Array<A, D> {
    let n = a.len_of(axis);
    let mut out = a.clone();
    if n == 0 {
        return out;
    }
    let shift = offset.rem_euclid(n as i64) as usize;
    for i in 0..n {
        out.index_axis_mut(axis, (i + shift) % n)
            .assign(&a.index_axis(axis, i));
    }
    out
}

fn check_rotation(offset: i64) -> Result<()> {
    if !(-1..=1).contains(&offset) {
        return Err(Error::InvalidRotation(offset));
    }
    Ok(())
}

/// Shifts every electrode one position along the band, identically for all
/// timesteps.
pub trait RotateChannels: Sized {
    fn rotate_channels(&self, offset: i64) -> Result<Self>;
}

impl RotateChannels for RawEmgWindow {
    fn rotate_channels(&self, offset: i64) -> Result<Self> {
        check_rotation(offset)?;
        Ok(RawEmgWindow {
            samples: roll_axis(&self.samples, Axis(2), offset),
            sample_rate_hz: self.sample_rate_hz,
        })
    }
}

impl RotateChannels for FeatureTensor {
    fn rotate_channels(&self, offset: i64) -> Result<Self> {
        check_rotation(offset)?;
        Ok(FeatureTensor(roll_axis(&self.0, Axis(2), offset)))
    }
}

/// Draws a rotation offset uniformly from {−1, 0, 1}.
pub fn sample_rotation_offset(seed: u64, sample_index: u64) -> i64 {
    rng::stream(seed, &[sample_index, 0x726f74]).random_range(-1..=1)
}

/// Applies a randomly drawn rotation; returns the rotated input and offset.
pub fn rotation_augment<T: RotateChannels>(
    input: &T,
    seed: u64,
    sample_index: u64,
) -> Result<(T, i64)> {
    let offset = sample_rotation_offset(seed, sample_index);
    Ok((input.rotate_channels(offset)?, offset))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JitterConfig {
    pub max_offset_ms: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self { max_offset_ms: 60.0 }
    }
}

impl JitterConfig {
    pub fn max_offset_samples(&self, sample_rate_hz: u32) -> usize {
        (self.max_offset_ms * sample_rate_hz as f64 / 1000.0).round() as usize
    }
}

/// Delays band `band` by `offset` samples (advances it when negative).
/// Vacated samples are zero; length is unchanged.
pub fn shift_band(window: &RawEmgWindow, band: usize, offset: i64) -> RawEmgWindow {
    let mut out = window.clone();
    let len = window.len() as i64;
    let src = window.samples.index_axis(Axis(1), band);
    let mut dst = out.samples.index_axis_mut(Axis(1), band);
    for t in 0..len {
        let from = t - offset;
        let mut row = dst.index_axis_mut(Axis(0), t as usize);
        if (0..len).contains(&from) {
            row.assign(&src.index_axis(Axis(0), from as usize));
        } else {
            row.fill(0.0);
        }
    }
    out
}

/// Shifts each hand independently by an integer offset drawn uniformly from
/// `[−m, m]` samples, `m` being the configured maximum at the window's rate.
pub fn temporal_jitter(
    window: &RawEmgWindow,
    config: &JitterConfig,
    seed: u64,
) -> Result<(RawEmgWindow, Vec<i64>)> {
    if !(config.max_offset_ms >= 0.0) {
        return Err(Error::InvalidConfig("max_offset_ms must be non-negative".into()));
    }
    let max = config.max_offset_samples(window.sample_rate_hz);
    if max > window.len() {
        return Err(Error::JitterTooLarge {
            offset: max,
            len: window.len(),
        });
    }
    let bands = window.samples.len_of(Axis(1));
    let mut out = window.clone();
    let mut offsets = Vec::with_capacity(bands);
    for band in 0..bands {
        let mut r = rng::stream(seed, &[band as u64, 0x6a6974]);
        let offset = r.random_range(-(max as i64)..=max as i64);
        out = shift_band(&out, band, offset);
        offsets.push(offset);
    }
    Ok((out, offsets))
}
