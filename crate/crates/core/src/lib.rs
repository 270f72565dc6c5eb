//! Streaming keystroke decoding from two-band wrist surface EMG.
//!
//! The pipeline runs a causal log-power spectrogram, reduces it to six
//! frequency bands, z-scores every feature with rolling statistics, encodes
//! each hand with a rotation-invariant MLP followed by a time-depth separable
//! convolution stack, and decodes keystrokes with CTC (greedy or a
//! backspace-aware beam search under a character n-gram LM).

pub mod augment;
pub mod decode;
pub mod encoder;
pub mod error;
pub mod frontend;
pub mod io;
pub mod metrics;
pub mod normalize;
pub mod pipeline;
pub mod rng;
pub mod simulate;
pub mod types;

pub use error::{Error, Result};
pub use types::{FeatureTensor, RawEmgWindow};
