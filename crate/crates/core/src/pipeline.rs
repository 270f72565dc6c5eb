//! End-to-end decoding of a session: spectrogram, band reduction, rolling
//! normalization, encoder and CTC decoding, in batch or frame-by-frame.

use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::decode::{beam_search, greedy_decode, CharLm, DecodeConfig, Vocabulary};
use crate::encoder::{Model, StreamingEncoder};
use crate::error::{Error, Result};
use crate::frontend::{
    aggregate_frame, aggregate_rsg, build_band_map, stft_logpower, BandMap, StftConfig, StreamingStft,
    FULL_BINS, NUM_RSG_BANDS,
};
use crate::io::SessionRecord;
use crate::metrics::{cer, CerBreakdown};
use crate::normalize::{rtn_batch, RtnConfig, RtnState};
use crate::types::{FeatureTensor, RawEmgWindow, NUM_BANDS, NUM_CHANNELS};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub stft: StftConfig,
    pub rtn: RtnConfig,
    pub decode: DecodeConfig,
}

fn reduce_bands(input_bins: usize, stft: &StftConfig) -> Result<bool> {
    match (stft.bins(), input_bins) {
        (FULL_BINS, NUM_RSG_BANDS) => Ok(true),
        (a, b) if a == b => Ok(false),
        (a, b) => Err(Error::InvalidConfig(format!(
            "spectrogram has {a} bins but the model expects {b}"
        ))),
    }
}

/// Normalized `[T × 2 × 16 × F]` features for a model taking `input_bins`
/// frequency inputs (33 full-resolution bins or 6 bands).
pub fn extract_features(emg: &RawEmgWindow, config: &PipelineConfig, input_bins: usize) -> Result<FeatureTensor> {
    let rsg = reduce_bands(input_bins, &config.stft)?;
    let mut spec = stft_logpower(emg, &config.stft)?;
    if rsg {
        spec = aggregate_rsg(&spec, &build_band_map())?;
    }
    rtn_batch(&spec.values, &config.rtn)
}

/// Whole-recording logits `[T × V]`.
pub fn batch_logits(emg: &RawEmgWindow, model: &Model, config: &PipelineConfig) -> Result<Array2<f64>> {
    let features = extract_features(emg, config, model.config().input_bins)?;
    Ok(model.encode(&features)?.logits)
}

/// Frame-at-a-time pipeline with the same output as [`batch_logits`]. Logits
/// are released once normalization statistics exist, so the first batch
/// arrives after the warm-up.
pub struct StreamingPipeline<'a> {
    stft: StreamingStft,
    bands: Option<BandMap>,
    rtn: RtnState,
    encoder: StreamingEncoder<'a>,
    bins: usize,
}

impl<'a> StreamingPipeline<'a> {
    pub fn new(model: &'a Model, config: &PipelineConfig) -> Result<Self> {
        let bins = model.config().input_bins;
        let bands = reduce_bands(bins, &config.stft)?.then(build_band_map);
        Ok(Self {
            stft: StreamingStft::new(&config.stft, NUM_BANDS, NUM_CHANNELS)?,
            bands,
            rtn: RtnState::new(config.rtn, &[NUM_BANDS, NUM_CHANNELS, bins])?,
            encoder: model.streaming(),
            bins,
        })
    }

    fn frame(&mut self, spec: Array3<f64>, out: &mut Vec<Array1<f64>>) -> Result<()> {
        let features = match &self.bands {
            Some(map) => {
                let mut r = Array3::zeros((NUM_BANDS, NUM_CHANNELS, NUM_RSG_BANDS));
                aggregate_frame(spec.view(), map, r.view_mut());
                r
            }
            None => spec,
        };
        let flat = features.into_shape_with_order(NUM_BANDS * NUM_CHANNELS * self.bins).expect("contiguous");
        let ready = self.rtn.step(flat.view())?;
        self.encode(ready, out)
    }

    fn encode(&mut self, ready: Vec<Vec<f64>>, out: &mut Vec<Array1<f64>>) -> Result<()> {
        for f in ready {
            let f = Array3::from_shape_vec((NUM_BANDS, NUM_CHANNELS, self.bins), f).expect("feature count");
            out.push(self.encoder.step(f.view())?);
        }
        Ok(())
    }

    /// Feeds `[samples × 2 × 16]` raw EMG; returns logits for frames that
    /// became ready.
    pub fn push(&mut self, samples: ArrayView3<'_, f32>) -> Result<Vec<Array1<f64>>> {
        let mut out = Vec::new();
        for spec in self.stft.push(samples) {
            self.frame(spec, &mut out)?;
        }
        Ok(out)
    }

    /// Flushes the partial hop and any frames still held by the warm-up.
    pub fn finish(mut self) -> Result<Vec<Array1<f64>>> {
        let mut out = Vec::new();
        if let Some(spec) = self.stft.finish() {
            self.frame(spec, &mut out)?;
        }
        let rest = self.rtn.finish();
        self.encode(rest, &mut out)?;
        Ok(out)
    }
}

/// Runs [`StreamingPipeline`] over a recording in chunks of `chunk` samples.
pub fn streaming_logits(emg: &RawEmgWindow, model: &Model, config: &PipelineConfig, chunk: usize) -> Result<Array2<f64>> {
    if emg.is_empty() {
        return Err(Error::EmptySignal);
    }
    let chunk = chunk.max(1);
    let mut p = StreamingPipeline::new(model, config)?;
    let mut rows = Vec::new();
    let mut start = 0;
    while start < emg.len() {
        let end = (start + chunk).min(emg.len());
        rows.extend(p.push(emg.samples.slice(ndarray::s![start..end, .., ..]))?);
        start = end;
    }
    rows.extend(p.finish()?);
    let v = model.config().vocab_size;
    let mut logits = Array2::zeros((rows.len(), v));
    for (mut dst, r) in logits.rows_mut().into_iter().zip(rows) {
        dst.assign(&r);
    }
    Ok(logits)
}

/// Greedy decoding without an LM, beam search with one.
pub fn decode_logits(
    logits: ArrayView2<'_, f64>,
    vocab: &Vocabulary,
    config: &DecodeConfig,
    lm: Option<&CharLm>,
) -> Result<Vec<usize>> {
    match lm {
        None => Ok(greedy_decode(logits, vocab.blank())),
        Some(lm) => beam_search(logits, vocab, Some(lm), config),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub labels: Vec<usize>,
    pub text: String,
    pub frames: usize,
    /// Against the session's key labels; absent when it has none.
    pub cer: Option<CerBreakdown>,
}

/// Decodes a whole session in one pass.
pub fn run_pipeline(
    session: &SessionRecord,
    model: &Model,
    vocab: &Vocabulary,
    config: &PipelineConfig,
    lm: Option<&CharLm>,
) -> Result<PipelineOutput> {
    let logits = batch_logits(&session.emg, model, config)?;
    finish_output(session, logits.view(), vocab, config, lm)
}

/// Like [`run_pipeline`] but through the frame-by-frame path.
pub fn run_pipeline_streaming(
    session: &SessionRecord,
    model: &Model,
    vocab: &Vocabulary,
    config: &PipelineConfig,
    lm: Option<&CharLm>,
    chunk: usize,
) -> Result<PipelineOutput> {
    let logits = streaming_logits(&session.emg, model, config, chunk)?;
    finish_output(session, logits.view(), vocab, config, lm)
}

fn finish_output(
    session: &SessionRecord,
    logits: ArrayView2<'_, f64>,
    vocab: &Vocabulary,
    config: &PipelineConfig,
    lm: Option<&CharLm>,
) -> Result<PipelineOutput> {
    if logits.ncols() != vocab.size() {
        return Err(Error::shape(format!("{} logits per frame", vocab.size()), logits.ncols().to_string()));
    }
    let labels = decode_logits(logits, vocab, &config.decode, lm)?;
    let text = vocab.decode(&labels);
    let reference = session.keys();
    let cer = if reference.is_empty() {
        None
    } else {
        let hyp: Vec<char> = text.chars().collect();
        Some(cer(&reference, &hyp)?)
    };
    Ok(PipelineOutput {
        labels,
        text,
        frames: logits.nrows(),
        cer,
    })
}
