//! Causal log-power spectrogram and reduced spectral granularity.
//!
//! Frame `t` covers samples `hop·t − (n_fft − hop) ..= hop·t + hop − 1`.
//! Samples before the start of the recording are zero, so every hop yields
//! exactly one frame and no frame looks ahead of its last hop. A trailing
//! partial hop is completed with zeros.

mod bands;

use std::sync::Arc;

use ndarray::{Array3, Array4, ArrayView3, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

pub use bands::{
    aggregate_frame, aggregate_rsg, build_band_map, BandMap, BAND_EDGES_HZ, NUM_RSG_BANDS,
};

use crate::error::{Error, Result};
use crate::types::{FeatureTensor, RawEmgWindow};

pub const DEFAULT_N_FFT: usize = 64;
pub const DEFAULT_HOP: usize = 16;
/// Bins produced by the default 64-point FFT.
pub const FULL_BINS: usize = DEFAULT_N_FFT / 2 + 1;
/// Floor added to the power before taking log10.
pub const LOG_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Rectangular,
    Hann,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            n_fft: DEFAULT_N_FFT,
            hop: DEFAULT_HOP,
            window: WindowKind::Rectangular,
        }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    fn validate(&self) -> Result<()> {
        if self.hop == 0 {
            return Err(Error::InvalidHop);
        }
        if self.n_fft < 2 || self.n_fft < self.hop {
            return Err(Error::InvalidFftSize(self.n_fft));
        }
        Ok(())
    }
}

/// Log-power features `[frame × band × channel × bin]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub values: FeatureTensor,
    pub n_fft: usize,
    pub hop: usize,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.values.frames()
    }

    pub fn bins(&self) -> usize {
        self.values.freqs()
    }
}

/// Number of frames produced for `samples` input samples.
pub fn frame_count(samples: usize, hop: usize) -> usize {
    samples.div_ceil(hop)
}

/// FFT plan plus analysis window, shared by the batch and streaming paths so
/// both produce bit-identical frames.
#[derive(Clone)]
struct FrameTransform {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    bins: usize,
}

impl FrameTransform {
    fn new(config: &StftConfig) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft);
        let n = config.n_fft;
        let window = match config.window {
            WindowKind::Rectangular => vec![1.0; n],
            WindowKind::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
        };
        Self {
            fft,
            window,
            bins: config.bins(),
        }
    }

    fn log_power(&self, frame: &[f64], buf: &mut [Complex<f64>], out: &mut [f64]) {
        for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
            *b = Complex::new(x * w, 0.0);
        }
        self.fft.process(buf);
        for (o, c) in out.iter_mut().zip(&buf[..self.bins]) {
            *o = (c.norm_sqr() + LOG_FLOOR).log10();
        }
    }
}

/// Batch causal STFT over a whole recording.
pub fn stft_logpower(window: &RawEmgWindow, config: &StftConfig) -> Result<Spectrogram> {
    config.validate()?;
    if window.is_empty() {
        return Err(Error::EmptySignal);
    }
    let (len, bands, channels) = window.samples.dim();
    let frames = frame_count(len, config.hop);
    let transform = FrameTransform::new(config);
    let n = config.n_fft;
    let left_pad = (n - config.hop) as isize;
    let mut values = Array4::zeros((frames, bands, channels, transform.bins));
    let mut frame = vec![0.0; n];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut out = vec![0.0; transform.bins];
    for b in 0..bands {
        for c in 0..channels {
            let series = window.samples.slice(ndarray::s![.., b, c]);
            for t in 0..frames {
                let start = (t * config.hop) as isize - left_pad;
                for (i, slot) in frame.iter_mut().enumerate() {
                    let idx = start + i as isize;
                    *slot = if idx >= 0 && (idx as usize) < len {
                        series[idx as usize] as f64
                    } else {
                        0.0
                    };
                }
                transform.log_power(&frame, &mut buf, &mut out);
                for (f, &v) in out.iter().enumerate() {
                    values[[t, b, c, f]] = v;
                }
            }
        }
    }
    Ok(Spectrogram {
        values: FeatureTensor(values),
        n_fft: n,
        hop: config.hop,
    })
}

/// Incremental STFT fed sample by sample (or chunk by chunk).
pub struct StreamingStft {
    transform: FrameTransform,
    n_fft: usize,
    hop: usize,
    bands: usize,
    channels: usize,
    /// Per electrode: the last `n_fft − hop` samples followed by the hop being filled.
    history: Vec<Vec<f64>>,
    filled: usize,
    seen: usize,
    buf: Vec<Complex<f64>>,
}

impl StreamingStft {
    pub fn new(config: &StftConfig, bands: usize, channels: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            transform: FrameTransform::new(config),
            n_fft: config.n_fft,
            hop: config.hop,
            bands,
            channels,
            history: vec![vec![0.0; config.n_fft]; bands * channels],
            filled: 0,
            seen: 0,
            buf: vec![Complex::new(0.0, 0.0); config.n_fft],
        })
    }

    /// Pushes `[samples × band × channel]` and returns every completed frame
    /// as `[band × channel × bin]`.
    pub fn push(&mut self, samples: ArrayView3<'_, f32>) -> Vec<Array3<f64>> {
        let mut frames = Vec::new();
        for row in samples.axis_iter(Axis(0)) {
            let pos = self.n_fft - self.hop + self.filled;
            for (e, &x) in row.iter().enumerate() {
                self.history[e][pos] = x as f64;
            }
            self.filled += 1;
            self.seen += 1;
            if self.filled == self.hop {
                frames.push(self.emit());
            }
        }
        frames
    }

    pub fn push_window(&mut self, window: &RawEmgWindow) -> Vec<Array3<f64>> {
        self.push(window.view())
    }

    /// Flushes a trailing partial hop, zero-filled.
    pub fn finish(&mut self) -> Option<Array3<f64>> {
        if self.filled == 0 {
            return None;
        }
        let start = self.n_fft - self.hop + self.filled;
        for h in &mut self.history {
            h[start..].fill(0.0);
        }
        Some(self.emit())
    }

    pub fn samples_seen(&self) -> usize {
        self.seen
    }

    fn emit(&mut self) -> Array3<f64> {
        let bins = self.transform.bins;
        let mut frame = Array3::zeros((self.bands, self.channels, bins));
        let mut out = vec![0.0; bins];
        for (e, hist) in self.history.iter_mut().enumerate() {
            self.transform.log_power(hist, &mut self.buf, &mut out);
            let (b, c) = (e / self.channels, e % self.channels);
            for (f, &v) in out.iter().enumerate() {
                frame[[b, c, f]] = v;
            }
            hist.copy_within(self.hop.., 0);
        }
        self.filled = 0;
        frame
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn empty_signal_rejected() {
        let w = RawEmgWindow::zeros(0);
        assert!(matches!(
            stft_logpower(&w, &StftConfig::default()),
            Err(Error::EmptySignal)
        ));
    }

    #[test]
    fn zero_hop_rejected() {
        let w = RawEmgWindow::zeros(32);
        let cfg = StftConfig {
            hop: 0,
            ..Default::default()
        };
        assert!(matches!(stft_logpower(&w, &cfg), Err(Error::InvalidHop)));
    }

    #[test]
    fn zeros_give_log_floor() {
        let spec = stft_logpower(&RawEmgWindow::zeros(2000), &StftConfig::default()).unwrap();
        assert_eq!(spec.frames(), 125);
        assert_eq!(spec.bins(), 33);
        assert!(spec.values.0.iter().all(|&v| v == -6.0));
    }

    #[test]
    fn frame_counts() {
        for len in [1, 15, 16, 17, 31, 32, 33, 2000] {
            let spec = stft_logpower(&RawEmgWindow::zeros(len), &StftConfig::default()).unwrap();
            assert_eq!(spec.frames(), len.div_ceil(16), "len {len}");
        }
    }

    #[test]
    fn streaming_matches_batch_bitwise() {
        let len = 300;
        let samples = Array3::from_shape_fn((len, 2, 16), |(t, b, c)| {
            ((t * 7 + b * 3 + c) as f32 * 0.37).sin()
        });
        let w = RawEmgWindow::new(samples, 2000).unwrap();
        let batch = stft_logpower(&w, &StftConfig::default()).unwrap();
        let mut stream = StreamingStft::new(&StftConfig::default(), 2, 16).unwrap();
        let mut frames = stream.push_window(&w);
        frames.extend(stream.finish());
        assert_eq!(frames.len(), batch.frames());
        for (t, f) in frames.iter().enumerate() {
            assert_eq!(f.view(), batch.values.0.index_axis(Axis(0), t));
        }
    }
}
