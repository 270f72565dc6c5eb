use serde::{Deserialize, Serialize};

use super::layers::LAYER_NORM_EPS;
use crate::decode::Vocabulary;
use crate::error::{Error, Result};
use crate::frontend::{FULL_BINS, NUM_RSG_BANDS};
use crate::types::NUM_CHANNELS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Both hands concatenated after the MLP and encoded by one stack.
    JointHand,
    /// One stack per hand with independent weights.
    SplitOnly,
    /// One stack per hand, weights shared between hands.
    SplitAndShare,
    /// Shared per-hand stacks with a wider embedding and more conv channels
    /// in the last blocks.
    Splashnet,
}

impl Variant {
    pub fn is_split(self) -> bool {
        !matches!(self, Variant::JointHand)
    }

    pub fn is_shared(self) -> bool {
        matches!(self, Variant::SplitAndShare | Variant::Splashnet)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Embedding width per hand (`D`).
    pub hand_width: usize,
    /// Conv channels `K` of each TDS block.
    pub conv_channels: Vec<usize>,
    pub kernel_width: usize,
    /// Output widths of the rotation-invariant MLP layers; the last one is `D`.
    pub mlp_layer_sizes: Vec<usize>,
    pub offsets: Vec<i64>,
    pub vocab_size: usize,
    /// Frequency bins per electrode at the input (6 reduced or 33 full).
    pub input_bins: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
}

fn default_channels() -> usize {
    NUM_CHANNELS
}

fn default_eps() -> f64 {
    LAYER_NORM_EPS
}

impl ModelConfig {
    fn base(variant: Variant, hand_width: usize, conv_channels: Vec<usize>, input_bins: usize) -> Self {
        Self {
            variant,
            hand_width,
            conv_channels,
            kernel_width: 32,
            mlp_layer_sizes: vec![hand_width],
            offsets: vec![-1, 0, 1],
            vocab_size: Vocabulary::keyboard().size(),
            input_bins,
            channels: NUM_CHANNELS,
            layer_norm_eps: LAYER_NORM_EPS,
        }
    }

    /// Joint-hand encoder on the full 33-bin spectrogram.
    pub fn baseline() -> Self {
        Self::base(Variant::JointHand, 384, vec![24; 4], FULL_BINS)
    }

    /// Joint-hand encoder on six reduced bands.
    pub fn joint_rsg() -> Self {
        Self::base(Variant::JointHand, 384, vec![24; 4], NUM_RSG_BANDS)
    }

    pub fn split_only() -> Self {
        Self::base(Variant::SplitOnly, 384, vec![24; 4], NUM_RSG_BANDS)
    }

    /// Shared per-hand encoder at `D = 384`.
    pub fn splashnet_mini() -> Self {
        Self::base(Variant::SplitAndShare, 384, vec![24; 4], NUM_RSG_BANDS)
    }

    /// Shared per-hand encoder at `D = 528` with 48 channels in the last two blocks.
    pub fn splashnet() -> Self {
        Self::base(Variant::Splashnet, 528, vec![24, 24, 48, 48], NUM_RSG_BANDS)
    }

    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "baseline" => Self::baseline(),
            "joint-rsg" | "joint_rsg" | "joint" => Self::joint_rsg(),
            "split" | "split-only" | "split_only" => Self::split_only(),
            "mini" | "splashnet-mini" | "splashnet_mini" => Self::splashnet_mini(),
            "splashnet" => Self::splashnet(),
            _ => return None,
        })
    }

    pub const PRESETS: [&'static str; 5] = ["baseline", "joint-rsg", "split-only", "splashnet-mini", "splashnet"];

    /// Width the TDS stack operates at.
    pub fn stack_width(&self) -> usize {
        if self.variant.is_split() {
            self.hand_width
        } else {
            2 * self.hand_width
        }
    }

    /// Input width of the output head.
    pub fn head_width(&self) -> usize {
        2 * self.hand_width
    }

    pub fn mlp_input_width(&self) -> usize {
        self.channels * self.input_bins
    }

    /// Frames of input context behind each output frame.
    pub fn receptive_field(&self) -> usize {
        1 + self.conv_channels.len() * (self.kernel_width - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.kernel_width == 0 {
            return bad("kernel_width must be at least 1".into());
        }
        if self.vocab_size < 2 {
            return bad("vocab_size must be at least 2".into());
        }
        if self.mlp_layer_sizes.last() != Some(&self.hand_width) {
            return bad(format!(
                "last mlp layer must have width {}, got {:?}",
                self.hand_width, self.mlp_layer_sizes
            ));
        }
        if self.conv_channels.is_empty() {
            return bad("at least one TDS block is required".into());
        }
        let width = self.stack_width();
        for &k in &self.conv_channels {
            if k == 0 || !width.is_multiple_of(k) {
                return bad(format!("stack width {width} is not divisible by {k} conv channels"));
            }
        }
        if self.offsets.is_empty() {
            return bad("offset set is empty".into());
        }
        for &o in &self.offsets {
            if o.unsigned_abs() as usize >= self.channels {
                return Err(Error::OffsetOutOfRange {
                    offset: o,
                    channels: self.channels,
                });
            }
        }
        if self.input_bins == 0 || self.channels == 0 {
            return bad("input shape must be non-empty".into());
        }
        Ok(())
    }
}
