//! CTC prefix beam search with a character language model and backspace
//! retraction.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::f64::consts::LN_10;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::lm::{CharLm, LmToken};
use super::vocab::{Vocabulary, BACKSPACE};
use super::{log_softmax, logsumexp2};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam_size: usize,
    /// Weight on the natural-log LM score.
    pub lm_weight: f64,
    /// Bonus per emitted label.
    pub insertion_bonus: f64,
    pub blank_index: usize,
    pub backspace_symbol: char,
    /// Extend each hypothesis with only the `k` most likely labels of a
    /// frame; `None` tries every label.
    pub max_candidates: Option<usize>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_size: 50,
            lm_weight: 1.5,
            insertion_bonus: 0.5,
            blank_index: 99,
            backspace_symbol: BACKSPACE,
            max_candidates: None,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::InvalidConfig("beam_size must be positive".into()));
        }
        if self.blank_index != vocab.blank() {
            return Err(Error::InvalidConfig(format!(
                "blank_index {} does not match vocabulary blank {}",
                self.blank_index,
                vocab.blank()
            )));
        }
        if !self.lm_weight.is_finite() || !self.insertion_bonus.is_finite() {
            return Err(Error::InvalidConfig("decoder weights must be finite".into()));
        }
        Ok(())
    }
}

/// A live hypothesis: its emitted labels, CTC masses and the LM stack of
/// surviving characters.
#[derive(Clone, Debug)]
pub struct Hypothesis {
    pub prefix: Vec<usize>,
    /// ln P(prefix, ending in blank).
    pub log_pb: f64,
    /// ln P(prefix, ending in a label).
    pub log_pnb: f64,
    /// Surviving characters with their natural-log LM scores.
    pub stack: Vec<(char, f64)>,
}

impl Hypothesis {
    fn root() -> Self {
        Self {
            prefix: Vec::new(),
            log_pb: 0.0,
            log_pnb: f64::NEG_INFINITY,
            stack: Vec::new(),
        }
    }

    pub fn ctc_log_prob(&self) -> f64 {
        logsumexp2(self.log_pb, self.log_pnb)
    }

    pub fn lm_log_prob(&self) -> f64 {
        self.stack.iter().map(|&(_, s)| s).sum()
    }

    pub fn surviving_text(&self) -> String {
        self.stack.iter().map(|&(c, _)| c).collect()
    }
}

/// Score components of a finished hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamResult {
    pub labels: Vec<usize>,
    /// Raw emitted keys, backspaces included.
    pub text: String,
    /// Text after applying backspaces.
    pub surviving_text: String,
    pub ctc_log_prob: f64,
    /// Natural-log LM score of the surviving characters and the end symbol.
    pub lm_log_prob: f64,
    pub score: f64,
}

/// Incremental decoder over log-probability frames.
pub struct BeamSearcher<'a> {
    vocab: &'a Vocabulary,
    lm: Option<&'a CharLm>,
    config: DecodeConfig,
    beam: Vec<Hypothesis>,
    frames: usize,
}

fn cmp_scored(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.1.cmp(b.1))
}

impl<'a> BeamSearcher<'a> {
    pub fn new(vocab: &'a Vocabulary, lm: Option<&'a CharLm>, config: DecodeConfig) -> Result<Self> {
        config.validate(vocab)?;
        Ok(Self {
            vocab,
            lm,
            config,
            beam: vec![Hypothesis::root()],
            frames: 0,
        })
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.beam
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    fn score(&self, h: &Hypothesis) -> f64 {
        h.ctc_log_prob() + self.config.lm_weight * h.lm_log_prob() + self.config.insertion_bonus * h.prefix.len() as f64
    }

    fn lm_context(stack: &[(char, f64)]) -> Vec<LmToken> {
        std::iter::once(LmToken::Begin)
            .chain(stack.iter().map(|&(c, _)| LmToken::Char(c)))
            .collect()
    }

    fn extend_stack(&self, stack: &[(char, f64)], key: char) -> Result<Vec<(char, f64)>> {
        let mut out = stack.to_vec();
        if key == self.config.backspace_symbol {
            out.pop();
            return Ok(out);
        }
        let s = match self.lm {
            Some(lm) => LN_10 * lm.log10_prob(&Self::lm_context(stack), LmToken::Char(key))?,
            None => 0.0,
        };
        out.push((key, s));
        Ok(out)
    }

    /// Advances by one frame of log-probabilities over the full vocabulary.
    pub fn step(&mut self, log_probs: ArrayView1<'_, f64>) -> Result<()> {
        let v = self.vocab.size();
        if log_probs.len() != v {
            return Err(Error::shape(format!("{v} log-probabilities"), log_probs.len().to_string()));
        }
        let blank = self.config.blank_index;
        let mut candidates: Vec<usize> = (0..v).filter(|&k| k != blank).collect();
        if let Some(k) = self.config.max_candidates {
            candidates.sort_by(|&a, &b| {
                log_probs[b].partial_cmp(&log_probs[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
            });
            candidates.truncate(k);
        }

        // Every beam prefix is distinct, so an extension can only coincide
        // with a prefix already in the beam (whose parent is also in the
        // beam). Those merge into the carried-over entries; the rest are
        // scored without being built.
        let index: HashMap<&[usize], usize> = self.beam.iter().enumerate().map(|(i, h)| (&h.prefix[..], i)).collect();
        let mut merge_into: HashMap<(usize, usize), usize> = HashMap::new();
        for (j, g) in self.beam.iter().enumerate() {
            if let Some((&k, parent)) = g.prefix.split_last() {
                if let Some(&i) = index.get(parent) {
                    merge_into.insert((i, k), j);
                }
            }
        }

        let mut stays: Vec<Hypothesis> = self
            .beam
            .iter()
            .map(|h| Hypothesis {
                prefix: h.prefix.clone(),
                log_pb: h.ctc_log_prob() + log_probs[blank],
                log_pnb: match h.prefix.last() {
                    Some(&l) => h.log_pnb + log_probs[l],
                    None => f64::NEG_INFINITY,
                },
                stack: h.stack.clone(),
            })
            .collect();
        let mut fresh: Vec<(f64, f64, usize, usize)> = Vec::with_capacity(self.beam.len() * candidates.len());
        for (i, h) in self.beam.iter().enumerate() {
            let total = h.ctc_log_prob();
            let last = h.prefix.last().copied();
            let context = self.lm.map(|_| Self::lm_context(&h.stack));
            let lm_sum = h.lm_log_prob();
            let len_bonus = self.config.insertion_bonus * (h.prefix.len() + 1) as f64;
            for &k in &candidates {
                let p = if Some(k) == last {
                    h.log_pb + log_probs[k]
                } else {
                    total + log_probs[k]
                };
                if p == f64::NEG_INFINITY {
                    continue;
                }
                if let Some(&j) = merge_into.get(&(i, k)) {
                    stays[j].log_pnb = logsumexp2(stays[j].log_pnb, p);
                    continue;
                }
                let key = self.vocab.symbol(k).expect("non-blank label");
                let lm = if key == self.config.backspace_symbol {
                    h.stack[..h.stack.len().saturating_sub(1)].iter().map(|&(_, s)| s).sum()
                } else {
                    match (self.lm, &context) {
                        (Some(lm), Some(ctx)) => lm_sum + LN_10 * lm.log10_prob(ctx, LmToken::Char(key))?,
                        _ => lm_sum + 0.0,
                    }
                };
                fresh.push((p + self.config.lm_weight * lm + len_bonus, p, i, k));
            }
        }

        let beam = &self.beam;
        let ext_cmp = |a: &(f64, f64, usize, usize), b: &(f64, f64, usize, usize)| {
            b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then_with(|| {
                let pa = beam[a.2].prefix.iter().chain(std::iter::once(&a.3));
                pa.cmp(beam[b.2].prefix.iter().chain(std::iter::once(&b.3)))
            })
        };
        let width = self.config.beam_size;
        if fresh.len() > width {
            fresh.select_nth_unstable_by(width, ext_cmp);
            fresh.truncate(width);
        }

        let mut scored: Vec<(f64, Hypothesis)> = stays.into_iter().map(|h| (self.score(&h), h)).collect();
        for (score, p, i, k) in fresh {
            let h = &self.beam[i];
            let mut prefix = h.prefix.clone();
            prefix.push(k);
            let stack = self.extend_stack(&h.stack, self.vocab.symbol(k).expect("non-blank label"))?;
            let ext = Hypothesis {
                prefix,
                log_pb: f64::NEG_INFINITY,
                log_pnb: p,
                stack,
            };
            scored.push((score, ext));
        }
        scored.sort_by(|a, b| cmp_scored((a.0, &a.1.prefix), (b.0, &b.1.prefix)));
        scored.truncate(width);
        self.beam = scored.into_iter().map(|(_, h)| h).collect();
        self.frames += 1;
        Ok(())
    }

    fn end_score(&self, h: &Hypothesis) -> Result<f64> {
        match self.lm {
            Some(lm) => Ok(LN_10 * lm.log10_prob(&Self::lm_context(&h.stack), LmToken::End)?),
            None => Ok(0.0),
        }
    }

    /// Final ranking with the end-of-sentence LM term.
    pub fn ranked(&self) -> Result<Vec<BeamResult>> {
        let mut out = self
            .beam
            .iter()
            .map(|h| {
                let lm = h.lm_log_prob() + self.end_score(h)?;
                let ctc = h.ctc_log_prob();
                Ok(BeamResult {
                    labels: h.prefix.clone(),
                    text: self.vocab.decode(&h.prefix),
                    surviving_text: h.surviving_text(),
                    ctc_log_prob: ctc,
                    lm_log_prob: lm,
                    score: ctc + self.config.lm_weight * lm + self.config.insertion_bonus * h.prefix.len() as f64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.sort_by(|a, b| cmp_scored((a.score, &a.labels), (b.score, &b.labels)));
        Ok(out)
    }

    pub fn finish(&self) -> Result<BeamResult> {
        Ok(self.ranked()?.swap_remove(0))
    }
}

/// Decodes `[T × V]` logits; the best hypothesis with its score breakdown.
pub fn beam_search_detailed(
    logits: ArrayView2<'_, f64>,
    vocab: &Vocabulary,
    lm: Option<&CharLm>,
    config: &DecodeConfig,
) -> Result<BeamResult> {
    let log_probs = log_softmax(logits);
    let mut search = BeamSearcher::new(vocab, lm, config.clone())?;
    for row in log_probs.rows() {
        search.step(row)?;
    }
    search.finish()
}

/// Decodes `[T × V]` logits to a label sequence.
pub fn beam_search(
    logits: ArrayView2<'_, f64>,
    vocab: &Vocabulary,
    lm: Option<&CharLm>,
    config: &DecodeConfig,
) -> Result<Vec<usize>> {
    Ok(beam_search_detailed(logits, vocab, lm, config)?.labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn tiny_vocab() -> Vocabulary {
        Vocabulary::new(['a', 'b', BACKSPACE]).unwrap()
    }

    fn cfg(v: &Vocabulary) -> DecodeConfig {
        DecodeConfig {
            blank_index: v.blank(),
            lm_weight: 0.0,
            insertion_bonus: 0.0,
            ..DecodeConfig::default()
        }
    }

    #[test]
    fn collapses_like_ctc() {
        let v = tiny_vocab();
        // a a blank a b  -> "aab"
        let mut lp = Array2::from_elem((5, 4), -20.0);
        for (t, k) in [0, 0, 3, 0, 1].into_iter().enumerate() {
            lp[[t, k]] = 0.0;
        }
        let r = beam_search_detailed(lp.view(), &v, None, &cfg(&v)).unwrap();
        assert_eq!(r.text, "aab");
    }

    #[test]
    fn single_frame_matches_argmax() {
        let v = tiny_vocab();
        let logits = array![[0.1, 2.0, -1.0, 0.5]];
        let r = beam_search(logits.view(), &v, None, &cfg(&v)).unwrap();
        assert_eq!(r, vec![1]);
    }

    #[test]
    fn backspace_pops_stack() {
        let v = tiny_vocab();
        let mut lp = Array2::from_elem((3, 4), -20.0);
        for (t, k) in [0, 1, 2].into_iter().enumerate() {
            lp[[t, k]] = 0.0;
        }
        let r = beam_search_detailed(lp.view(), &v, None, &cfg(&v)).unwrap();
        assert_eq!(r.text, "ab⌫");
        assert_eq!(r.surviving_text, "a");
    }

    #[test]
    fn blank_mismatch_rejected() {
        let v = tiny_vocab();
        let c = DecodeConfig::default();
        assert!(BeamSearcher::new(&v, None, c).is_err());
    }
}
