//! Shared array types flowing through the pipeline.

use ndarray::{Array3, Array4, ArrayView3, Axis};

use crate::error::{Error, Result};

/// Sampling rate of every supported recording.
pub const SAMPLE_RATE_HZ: u32 = 2000;
/// Number of wristbands (hands).
pub const NUM_BANDS: usize = 2;
/// Electrodes per wristband.
pub const NUM_CHANNELS: usize = 16;
/// Spectrogram frames per second at the default hop of 16 samples.
pub const FRAMES_PER_SECOND: usize = 125;

/// Raw EMG laid out as `[samples × band × channel]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawEmgWindow {
    pub samples: Array3<f32>,
    pub sample_rate_hz: u32,
}

impl RawEmgWindow {
    pub fn new(samples: Array3<f32>, sample_rate_hz: u32) -> Result<Self> {
        let (_, bands, channels) = samples.dim();
        if bands != NUM_BANDS || channels != NUM_CHANNELS {
            return Err(Error::shape(
                format!("[T × {NUM_BANDS} × {NUM_CHANNELS}]"),
                format!("{:?}", samples.shape()),
            ));
        }
        if sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(Error::UnsupportedSampleRate(sample_rate_hz));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            samples: Array3::zeros((len, NUM_BANDS, NUM_CHANNELS)),
            sample_rate_hz: SAMPLE_RATE_HZ,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len_of(Axis(0))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn view(&self) -> ArrayView3<'_, f32> {
        self.samples.view()
    }
}

/// Time-major features laid out as `[time × band × channel × frequency]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor(pub Array4<f64>);

impl FeatureTensor {
    pub fn zeros(frames: usize, bands: usize, channels: usize, freqs: usize) -> Self {
        Self(Array4::zeros((frames, bands, channels, freqs)))
    }

    pub fn frames(&self) -> usize {
        self.0.len_of(Axis(0))
    }

    pub fn bands(&self) -> usize {
        self.0.len_of(Axis(1))
    }

    pub fn channels(&self) -> usize {
        self.0.len_of(Axis(2))
    }

    pub fn freqs(&self) -> usize {
        self.0.len_of(Axis(3))
    }

    /// Number of values in a single frame.
    pub fn frame_len(&self) -> usize {
        self.bands() * self.channels() * self.freqs()
    }

    pub fn dim(&self) -> (usize, usize, usize, usize) {
        self.0.dim()
    }

    pub fn into_inner(self) -> Array4<f64> {
        self.0
    }
}

impl From<Array4<f64>> for FeatureTensor {
    fn from(a: Array4<f64>) -> Self {
        Self(a)
    }
}
