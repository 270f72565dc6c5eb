//! Synthetic sessions with key-specific EMG bursts, and a hand-set model
//! that reads them back.
//!
//! Key label `j` fires a burst on hand `j % 2`, channel `(j / 2) % 16`,
//! using sinusoids at the member bins of reduced band `(j / 32) % 6`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::decode::Vocabulary;
use crate::encoder::{expected_tensors, Model, ModelConfig, Tensor, Variant, WeightStore};
use crate::error::{Error, Result};
use crate::frontend::{build_band_map, DEFAULT_N_FFT, NUM_RSG_BANDS};
use crate::io::{KeyEvent, SessionRecord, Split};
use crate::rng;
use crate::types::{RawEmgWindow, NUM_BANDS, NUM_CHANNELS, SAMPLE_RATE_HZ};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSpec {
    pub duration_s: f64,
    /// Spacing between key presses.
    pub key_interval_s: f64,
    /// Quiet time before the first key.
    pub lead_in_s: f64,
    pub burst_sigma_ms: f64,
    /// Amplitude of each sinusoid in a burst.
    pub burst_amplitude: f64,
    pub noise_std: f64,
    /// Keys to type, cycled; random keys when absent.
    pub text: Option<String>,
    pub participant_id: String,
    pub session_id: String,
    pub split: Split,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            duration_s: 10.0,
            key_interval_s: 0.4,
            lead_in_s: 1.5,
            burst_sigma_ms: 30.0,
            burst_amplitude: 1.0,
            noise_std: 0.25,
            text: None,
            participant_id: "sim".into(),
            session_id: "sim-0".into(),
            split: Split::TestDomainTest,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyTemplate {
    pub hand: usize,
    pub channel: usize,
    pub band: usize,
}

pub fn key_template(label: usize) -> KeyTemplate {
    KeyTemplate {
        hand: label % NUM_BANDS,
        channel: (label / NUM_BANDS) % NUM_CHANNELS,
        band: (label / (NUM_BANDS * NUM_CHANNELS)) % NUM_RSG_BANDS,
    }
}

/// Adds one key burst centered on sample `center` into `emg`.
fn add_burst(emg: &mut RawEmgWindow, label: usize, center: usize, spec: &SimulationSpec, phases: &[f64]) {
    let t = key_template(label);
    let map = build_band_map();
    let sr = SAMPLE_RATE_HZ as f64;
    let sigma = spec.burst_sigma_ms * 1e-3 * sr;
    let reach = (4.0 * sigma).ceil() as usize;
    let lo = center.saturating_sub(reach);
    let hi = (center + reach + 1).min(emg.len());
    let bin_hz = sr / DEFAULT_N_FFT as f64;
    for n in lo..hi {
        let d = n as f64 - center as f64;
        let env = (-0.5 * (d / sigma).powi(2)).exp();
        let s: f64 = map
            .members(t.band)
            .iter()
            .zip(phases)
            .map(|(&bin, &ph)| (2.0 * PI * bin as f64 * bin_hz * n as f64 / sr + ph).sin())
            .sum();
        emg.samples[[n, t.hand, t.channel]] += (spec.burst_amplitude * env * s) as f32;
    }
}

/// The clean burst for one key in isolation, `len` samples long.
pub fn key_burst(label: usize, len: usize, spec: &SimulationSpec) -> RawEmgWindow {
    let mut emg = RawEmgWindow::zeros(len);
    add_burst(&mut emg, label, len / 2, spec, &[0.0; 16]);
    emg
}

pub fn simulate_session(spec: &SimulationSpec, vocab: &Vocabulary, seed: u64) -> Result<SessionRecord> {
    if !(spec.duration_s > 0.0) || !(spec.key_interval_s > 0.0) || spec.lead_in_s < 0.0 {
        return Err(Error::InvalidConfig("duration and key interval must be positive".into()));
    }
    if !(spec.noise_std >= 0.0) || !(spec.burst_sigma_ms > 0.0) {
        return Err(Error::InvalidConfig("noise and burst width must be non-negative".into()));
    }
    let sr = SAMPLE_RATE_HZ as f64;
    let len = (spec.duration_s * sr).round() as usize;
    let mut emg = RawEmgWindow::zeros(len);

    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut r = rng::stream(seed, &[0]);
    for v in emg.samples.iter_mut() {
        *v = noise.sample(&mut r) as f32;
    }

    let text: Option<Vec<char>> = spec.text.as_ref().map(|t| t.chars().collect());
    if text.as_ref().is_some_and(|t| t.is_empty()) {
        return Err(Error::InvalidConfig("text is empty".into()));
    }
    let tail = (4.0 * spec.burst_sigma_ms * 1e-3 * sr) as usize + 1;
    let step = spec.key_interval_s * sr;
    let mut keys = rng::stream(seed, &[1]);
    let mut labels = Vec::new();
    for i in 0.. {
        let ts = (spec.lead_in_s * sr + i as f64 * step).round() as usize;
        if ts + tail >= len {
            break;
        }
        let label = match &text {
            Some(t) => vocab.label(t[i % t.len()])?,
            None => keys.random_range(0..vocab.blank()),
        };
        let mut pr = rng::stream(seed, &[2, i as u64]);
        let phases: Vec<f64> = (0..16).map(|_| pr.random_range(0.0..2.0 * PI)).collect();
        add_burst(&mut emg, label, ts, spec, &phases);
        labels.push(KeyEvent {
            timestamp: ts as u64,
            key: vocab.symbol(label).expect("non-blank"),
        });
    }
    let record = SessionRecord {
        participant_id: spec.participant_id.clone(),
        session_id: spec.session_id.clone(),
        split: spec.split,
        emg,
        labels,
    };
    record.validate()?;
    Ok(record)
}

/// Hand-set weights for [`rigged_model`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiggedParams {
    /// Normalized feature level a burst must exceed.
    pub threshold: f64,
    /// Constant activation on the spare embedding units.
    pub reference: f64,
    pub gain: f64,
    pub blank_bias: f64,
    /// Frames in the causal moving average applied by the conv block.
    pub smooth_frames: usize,
    /// Weight of the moving average against the residual path.
    pub smoothing: f64,
}

impl Default for RiggedParams {
    fn default() -> Self {
        Self {
            threshold: 2.5,
            reference: 3.0,
            gain: 4.0,
            blank_bias: 1.0,
            smooth_frames: 8,
            smoothing: 10.0,
        }
    }
}

/// Shared split encoder (`D = 120`, one 24-channel block, no rotations)
/// whose MLP passes thresholded features through, whose TDS stack smooths
/// them over time and normalizes, and whose head maps each key to its burst
/// feature.
pub fn rigged_model(vocab: &Vocabulary, params: &RiggedParams) -> Result<Model> {
    let features = NUM_CHANNELS * NUM_RSG_BANDS;
    let width = 120;
    let config = ModelConfig {
        variant: Variant::SplitAndShare,
        hand_width: width,
        conv_channels: vec![24],
        kernel_width: params.smooth_frames.max(1),
        mlp_layer_sizes: vec![width],
        offsets: vec![0],
        vocab_size: vocab.size(),
        input_bins: NUM_RSG_BANDS,
        channels: NUM_CHANNELS,
        layer_norm_eps: crate::encoder::LAYER_NORM_EPS,
    };
    let mut store = WeightStore::new();
    let mut left: HashMap<String, Arc<Tensor>> = HashMap::new();
    for (name, shape) in expected_tensors(&config) {
        if let Some(rest) = name.strip_prefix("right") {
            let t = Arc::clone(&left[&format!("left{rest}")]);
            store.insert(name, t);
            continue;
        }
        let n: usize = shape.iter().product();
        let mut data = vec![0f32; n];
        if name.ends_with("norm.weight") {
            data.fill(1.0);
        } else if name == "left.mlp.0.weight" {
            for i in 0..features {
                data[i * features + i] = 1.0;
            }
        } else if name == "left.mlp.0.bias" {
            for (i, v) in data.iter_mut().enumerate() {
                *v = if i < features { -params.threshold } else { params.reference } as f32;
            }
        } else if name == "left.tds.0.conv.weight" {
            let (k, w) = (shape[0], shape[2]);
            for c in 0..k {
                for lag in 0..w {
                    data[(c * k + c) * w + lag] = (params.smoothing / w as f64) as f32;
                }
            }
        } else if name == "head.weight" {
            let cols = 2 * width;
            for label in 0..vocab.blank() {
                let t = key_template(label);
                data[label * cols + t.hand * width + t.channel * NUM_RSG_BANDS + t.band] = params.gain as f32;
            }
        } else if name == "head.bias" {
            data[vocab.blank()] = params.blank_bias as f32;
        }
        let t = Arc::new(Tensor::new(shape, data)?);
        left.insert(name.clone(), Arc::clone(&t));
        store.insert(name, t);
    }
    Model::from_store(config, &store)
}
