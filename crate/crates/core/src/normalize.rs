//! Rolling time normalization: causal per-feature z-scoring.
//!
//! Statistics for the first `warmup_frames` frames are frozen to those of the
//! whole warm-up window, so those frames are buffered and released together
//! once the window is complete. After that every frame is emitted as soon as
//! it arrives, normalized with statistics over all frames seen so far (or
//! the trailing window in sliding mode).

use std::collections::VecDeque;

use ndarray::{Array4, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FeatureTensor, FRAMES_PER_SECOND};

pub const DEFAULT_WARMUP_FRAMES: usize = FRAMES_PER_SECOND;
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RtnWindow {
    #[default]
    Cumulative,
    /// Statistics over the most recent `n` frames.
    Sliding(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RtnConfig {
    pub warmup_frames: usize,
    pub epsilon: f64,
    pub window: RtnWindow,
}

impl Default for RtnConfig {
    fn default() -> Self {
        Self {
            warmup_frames: DEFAULT_WARMUP_FRAMES,
            epsilon: DEFAULT_EPSILON,
            window: RtnWindow::Cumulative,
        }
    }
}

impl RtnConfig {
    pub fn sliding_seconds(seconds: usize) -> Self {
        Self {
            window: RtnWindow::Sliding(seconds * FRAMES_PER_SECOND),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_frames == 0 {
            return Err(Error::InvalidConfig("warmup_frames must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if let RtnWindow::Sliding(w) = self.window {
            if w < self.warmup_frames {
                return Err(Error::InvalidConfig(format!(
                    "sliding window of {w} frames is shorter than the warm-up of {}",
                    self.warmup_frames
                )));
            }
        }
        Ok(())
    }
}

/// Streaming normalizer state for one session.
#[derive(Clone, Debug)]
pub struct RtnState {
    config: RtnConfig,
    features: usize,
    count: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    frozen: Option<(Vec<f64>, Vec<f64>)>,
    pending: Vec<Vec<f64>>,
    /// Frames currently inside the sliding window (sliding mode only).
    window: VecDeque<Vec<f64>>,
}

impl RtnState {
    /// `feature_shape` is the per-frame shape, e.g. `[2, 16, 6]`.
    pub fn new(config: RtnConfig, feature_shape: &[usize]) -> Result<Self> {
        config.validate()?;
        let features = feature_shape.iter().product();
        Ok(Self {
            config,
            features,
            count: 0,
            sum: vec![0.0; features],
            sum_sq: vec![0.0; features],
            frozen: None,
            pending: Vec::new(),
            window: VecDeque::new(),
        })
    }

    pub fn config(&self) -> &RtnConfig {
        &self.config
    }

    pub fn features(&self) -> usize {
        self.features
    }

    /// Frames consumed so far.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Frozen warm-up `(mean, std)` once the warm-up window is complete.
    pub fn frozen_stats(&self) -> Option<(&[f64], &[f64])> {
        self.frozen.as_ref().map(|(m, s)| (m.as_slice(), s.as_slice()))
    }

    /// Consumes one frame. Returns the frames that became ready, in order:
    /// nothing during warm-up, the whole warm-up window on its last frame,
    /// and exactly one frame afterwards.
    pub fn step(&mut self, frame: ArrayView1<'_, f64>) -> Result<Vec<Vec<f64>>> {
        if frame.len() != self.features {
            return Err(Error::shape(
                format!("{} features", self.features),
                format!("{} features", frame.len()),
            ));
        }
        let frame: Vec<f64> = frame.iter().copied().collect();
        for ((s, q), &x) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(&frame) {
            *s += x;
            *q += x * x;
        }
        self.count += 1;
        if let RtnWindow::Sliding(w) = self.config.window {
            self.window.push_back(frame.clone());
            if self.window.len() > w {
                let old = self.window.pop_front().expect("non-empty window");
                for ((s, q), &x) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(&old) {
                    *s -= x;
                    *q -= x * x;
                }
            }
        }

        if self.frozen.is_none() {
            self.pending.push(frame);
            if self.count < self.config.warmup_frames {
                return Ok(Vec::new());
            }
            return Ok(self.release_warmup());
        }

        let (mean, std) = self.current_stats();
        Ok(vec![apply(&frame, &mean, &std)])
    }

    /// Releases frames still buffered in an incomplete warm-up, normalized
    /// with statistics over the frames that did arrive.
    pub fn finish(&mut self) -> Vec<Vec<f64>> {
        if self.frozen.is_some() || self.pending.is_empty() {
            return Vec::new();
        }
        self.release_warmup()
    }

    fn release_warmup(&mut self) -> Vec<Vec<f64>> {
        let (mean, std) = self.current_stats();
        let out = self
            .pending
            .drain(..)
            .map(|f| apply(&f, &mean, &std))
            .collect();
        self.frozen = Some((mean, std));
        out
    }

    fn current_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let n = match self.config.window {
            RtnWindow::Cumulative => self.count,
            RtnWindow::Sliding(_) => self.window.len(),
        } as f64;
        let eps = self.config.epsilon;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let std = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n - m * m + eps).max(0.0).sqrt())
            .collect();
        (mean, std)
    }
}

fn apply(frame: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    frame
        .iter()
        .zip(mean)
        .zip(std)
        .map(|((x, m), s)| (x - m) / s)
        .collect()
}

/// Normalizes a whole `[time × …]` tensor; identical to folding
/// [`RtnState::step`] over its frames.
pub fn rtn_batch(frames: &FeatureTensor, config: &RtnConfig) -> Result<FeatureTensor> {
    let (t, b, c, f) = frames.dim();
    if t == 0 {
        return Err(Error::EmptySignal);
    }
    let mut state = RtnState::new(*config, &[b, c, f])?;
    let mut out = Vec::with_capacity(t * b * c * f);
    let flat = frames
        .0
        .view()
        .into_shape_with_order((t, b * c * f))
        .map_err(|e| Error::shape("contiguous tensor", e.to_string()))?;
    for row in flat.axis_iter(Axis(0)) {
        for emitted in state.step(row)? {
            out.extend(emitted);
        }
    }
    for emitted in state.finish() {
        out.extend(emitted);
    }
    let arr = Array4::from_shape_vec((t, b, c, f), out).expect("one output per input frame");
    Ok(FeatureTensor(arr))
}
