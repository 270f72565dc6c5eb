use ndarray::{s, Array4, ArrayView3, ArrayViewMut3, Axis};
use serde::{Deserialize, Serialize};

use super::{Spectrogram, FULL_BINS};
use crate::error::{Error, Result};
use crate::types::FeatureTensor;

/// Number of reduced bands.
pub const NUM_RSG_BANDS: usize = 6;

/// Band edges in Hz. The first band includes its lower edge, every band
/// includes its upper edge.
pub const BAND_EDGES_HZ: [(f64, f64); NUM_RSG_BANDS] = [
    (31.25, 62.5),
    (62.5, 125.0),
    (125.0, 250.0),
    (250.0, 375.0),
    (375.0, 687.5),
    (687.5, 1000.0),
];

/// Assignment of FFT bins to the six reduced bands. Band indices are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandMap {
    pub edges_hz: [(f64, f64); NUM_RSG_BANDS],
    assignment: Vec<Option<usize>>,
    members: Vec<Vec<usize>>,
}

impl BandMap {
    /// Map for a 64-point FFT at 2 kHz (bin spacing 31.25 Hz).
    pub fn standard() -> Self {
        Self::for_bins(FULL_BINS, 2000.0 / 64.0)
    }

    fn for_bins(bins: usize, spacing_hz: f64) -> Self {
        let mut assignment = vec![None; bins];
        let mut members = vec![Vec::new(); NUM_RSG_BANDS];
        for (bin, slot) in assignment.iter_mut().enumerate() {
            let center = bin as f64 * spacing_hz;
            let band = BAND_EDGES_HZ.iter().position(|&(lo, hi)| {
                let above_lower = if lo == BAND_EDGES_HZ[0].0 {
                    center >= lo
                } else {
                    center > lo
                };
                above_lower && center <= hi
            });
            if let Some(b) = band {
                members[b].push(bin);
            }
            *slot = band;
        }
        Self {
            edges_hz: BAND_EDGES_HZ,
            assignment,
            members,
        }
    }

    /// Band of an FFT bin, `None` for the DC bin.
    pub fn band_of(&self, bin: usize) -> Option<usize> {
        self.assignment.get(bin).copied().flatten()
    }

    /// FFT bins belonging to `band`, ascending.
    pub fn members(&self, band: usize) -> &[usize] {
        &self.members[band]
    }

    pub fn populations(&self) -> [usize; NUM_RSG_BANDS] {
        std::array::from_fn(|b| self.members[b].len())
    }

    pub fn num_bins(&self) -> usize {
        self.assignment.len()
    }
}

/// The fixed 33-to-6 bin assignment.
pub fn build_band_map() -> BandMap {
    BandMap::standard()
}

/// Sums member-bin log-powers of one `[band × channel × 33]` frame into `out`
/// (`[band × channel × 6]`).
pub fn aggregate_frame(frame: ArrayView3<'_, f64>, map: &BandMap, mut out: ArrayViewMut3<'_, f64>) {
    for ((b, c, band), o) in out.indexed_iter_mut() {
        let mut acc = 0.0;
        for &bin in map.members(band) {
            acc += frame[[b, c, bin]];
        }
        *o = acc;
    }
}

/// Reduces a full-resolution spectrogram to six bands by summing log-power
/// values of member bins. The DC bin is dropped.
pub fn aggregate_rsg(spec: &Spectrogram, map: &BandMap) -> Result<Spectrogram> {
    let (frames, bands, channels, freqs) = spec.values.dim();
    if freqs != FULL_BINS || map.num_bins() != FULL_BINS {
        return Err(Error::ExpectedFullResolution(freqs));
    }
    let mut out = Array4::zeros((frames, bands, channels, NUM_RSG_BANDS));
    for (t, mut dst) in out.axis_iter_mut(Axis(0)).enumerate() {
        aggregate_frame(spec.values.0.slice(s![t, .., .., ..]), map, dst.view_mut());
    }
    Ok(Spectrogram {
        values: FeatureTensor(out),
        n_fft: spec.n_fft,
        hop: spec.hop,
    })
}
