//! Analytic parameter and FLOP counts.
//!
//! FLOPs count the multiply-accumulates of every matrix product and
//! convolution (two FLOPs each); bias adds, activations and normalization
//! are not counted.

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::types::FRAMES_PER_SECOND;

fn mlp_params(config: &ModelConfig) -> u64 {
    let mut width = config.mlp_input_width() as u64;
    let mut total = 0;
    for &size in &config.mlp_layer_sizes {
        total += width * size as u64 + size as u64;
        width = size as u64;
    }
    total
}

fn stack_params(config: &ModelConfig) -> u64 {
    let w = config.stack_width() as u64;
    let kw = config.kernel_width as u64;
    config
        .conv_channels
        .iter()
        .map(|&k| {
            let k = k as u64;
            let conv = k * k * kw + k;
            let fc = 2 * (w * w + w);
            conv + fc + 2 * (2 * w)
        })
        .sum()
}

/// Exact parameter count; tensors shared between hands count once.
pub fn count_params(config: &ModelConfig) -> u64 {
    let head = (config.head_width() * config.vocab_size + config.vocab_size) as u64;
    let (mlp, stack) = (mlp_params(config), stack_params(config));
    let encoder = if !config.variant.is_split() {
        2 * mlp + stack
    } else if config.variant.is_shared() {
        mlp + stack
    } else {
        2 * (mlp + stack)
    };
    encoder + head
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlopCount {
    pub frames: u64,
    pub macs: u64,
    /// `2 × macs`.
    pub flops: u64,
}

impl FlopCount {
    pub fn gflops(&self) -> f64 {
        self.flops as f64 / 1e9
    }

    /// Total if a multiply-accumulate is counted as one FLOP.
    pub fn gmacs(&self) -> f64 {
        self.macs as f64 / 1e9
    }
}

/// Multiply-accumulates per output frame.
pub fn macs_per_frame(config: &ModelConfig) -> u64 {
    let mut width = config.mlp_input_width() as u64;
    let mut mlp = 0;
    for &size in &config.mlp_layer_sizes {
        mlp += width * size as u64;
        width = size as u64;
    }
    // every rotation runs the MLP, on both hands
    let mlp = 2 * config.offsets.len() as u64 * mlp;
    let w = config.stack_width() as u64;
    let kw = config.kernel_width as u64;
    let stack: u64 = config
        .conv_channels
        .iter()
        .map(|&k| w * k as u64 * kw + 2 * w * w)
        .sum();
    let stacks = if config.variant.is_split() { 2 } else { 1 };
    let head = (config.head_width() * config.vocab_size) as u64;
    mlp + stacks * stack + head
}

/// Forward-pass cost on `ceil(seconds · 125)` frames.
pub fn count_flops(config: &ModelConfig, seconds: f64) -> FlopCount {
    let frames = if seconds > 0.0 {
        (seconds * FRAMES_PER_SECOND as f64).ceil() as u64
    } else {
        0
    };
    let macs = frames * macs_per_frame(config);
    FlopCount {
        frames,
        macs,
        flops: 2 * macs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Variant;

    #[test]
    fn single_linear_layer() {
        use crate::encoder::{Tensor, WeightStore};
        use std::sync::Arc;
        let mut store = WeightStore::new();
        store.insert("w", Arc::new(Tensor::new(vec![2, 4], vec![0.0; 8]).unwrap()));
        store.insert("b", Arc::new(Tensor::new(vec![2], vec![0.0; 2]).unwrap()));
        assert_eq!(store.unique_parameters(), 10);
    }

    #[test]
    fn conv_layer_count() {
        let cfg = ModelConfig {
            conv_channels: vec![24],
            ..ModelConfig::splashnet_mini()
        };
        let w = cfg.stack_width() as u64;
        let without_conv = 2 * (w * w + w) + 4 * w;
        assert_eq!(stack_params(&cfg) - without_conv, 18_456);
    }

    #[test]
    fn zero_seconds() {
        assert_eq!(count_flops(&ModelConfig::splashnet(), 0.0).flops, 0);
    }

    #[test]
    fn split_variants_same_flops() {
        let a = count_flops(&ModelConfig::split_only(), 30.0);
        let b = count_flops(&ModelConfig::splashnet_mini(), 30.0);
        assert_eq!(a, b);
        assert_eq!(a.frames, 3750);
    }

    #[test]
    fn sharing_halves_encoder() {
        let split = count_params(&ModelConfig::split_only());
        let shared = count_params(&ModelConfig::splashnet_mini());
        let head = 768 * 100 + 100;
        assert_eq!(split - head, 2 * (shared - head));
        assert_eq!(ModelConfig::splashnet_mini().variant, Variant::SplitAndShare);
    }
}
