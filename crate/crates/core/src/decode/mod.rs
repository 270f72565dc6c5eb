//! Greedy and beam-search CTC decoding.

mod beam;
mod lm;
mod vocab;

use ndarray::{Array2, ArrayView2};

pub use beam::{beam_search, beam_search_detailed, BeamResult, BeamSearcher, DecodeConfig, Hypothesis};
pub use lm::{CharLm, LmToken, MAX_SUPPORTED_ORDER};
pub use vocab::{Vocabulary, BACKSPACE, ENTER, SHIFT, TAB};

pub(crate) fn logsumexp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let z = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - z);
    }
    out
}

/// Best label per frame, repeats merged and blanks dropped. Ties go to the
/// lower label.
pub fn greedy_decode(logits: ArrayView2<'_, f64>, blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for row in logits.rows() {
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        if Some(best) != prev && best != blank {
            out.push(best);
        }
        prev = Some(best);
    }
    out
}
