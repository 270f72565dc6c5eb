//! Character error rate and CTC likelihood.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::decode::{log_softmax, logsumexp2};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CerBreakdown {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_length: usize,
    /// Percentage.
    pub cer: f64,
}

impl CerBreakdown {
    pub fn edits(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Unit-cost edit distance between key sequences with an S/D/I split.
pub fn cer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<CerBreakdown> {
    let (n, m) = (reference.len(), hypothesis.len());
    if n == 0 {
        return Err(Error::UndefinedCer);
    }
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let ins = d[i * w + j - 1] + 1;
            let del = d[(i - 1) * w + j] + 1;
            d[i * w + j] = sub.min(ins).min(del);
        }
    }

    let (mut s, mut ins, mut del) = (0, 0, 0);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let mismatch = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if d[(i - 1) * w + j - 1] + mismatch == here {
                s += mismatch;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && d[i * w + j - 1] + 1 == here {
            ins += 1;
            j -= 1;
        } else {
            del += 1;
            i -= 1;
        }
    }
    Ok(CerBreakdown {
        substitutions: s,
        deletions: del,
        insertions: ins,
        reference_length: n,
        cer: 100.0 * (s + del + ins) as f64 / n as f64,
    })
}

pub fn cer_str(reference: &str, hypothesis: &str) -> Result<CerBreakdown> {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    cer(&r, &h)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CtcLikelihood {
    /// Natural log; `-inf` when the target cannot fit.
    pub log_likelihood: f64,
    pub infeasible: bool,
}

/// ln P(target | logits) by the CTC forward recursion. Logits are
/// normalized per frame first.
pub fn ctc_loglik(logits: ArrayView2<'_, f64>, target: &[usize], blank: usize) -> Result<CtcLikelihood> {
    let (t_len, v) = logits.dim();
    if blank >= v {
        return Err(Error::InvalidConfig(format!("blank {blank} outside {v} labels")));
    }
    if let Some(&bad) = target.iter().find(|&&k| k >= v || k == blank) {
        return Err(Error::InvalidConfig(format!("target label {bad} is blank or out of range")));
    }
    let repeats = target.windows(2).filter(|p| p[0] == p[1]).count();
    let infeasible = CtcLikelihood {
        log_likelihood: f64::NEG_INFINITY,
        infeasible: true,
    };
    if target.len() + repeats > t_len {
        log::warn!("ctc target of length {} cannot fit {} frames", target.len(), t_len);
        return Ok(infeasible);
    }
    if t_len == 0 {
        return Ok(CtcLikelihood {
            log_likelihood: 0.0,
            infeasible: false,
        });
    }

    let lp = log_softmax(logits);
    let ext: Vec<usize> = std::iter::once(blank)
        .chain(target.iter().flat_map(|&k| [k, blank]))
        .collect();
    let s_len = ext.len();
    let mut alpha = vec![f64::NEG_INFINITY; s_len];
    alpha[0] = lp[[0, ext[0]]];
    if s_len > 1 {
        alpha[1] = lp[[0, ext[1]]];
    }
    let mut next = vec![f64::NEG_INFINITY; s_len];
    for t in 1..t_len {
        for s in 0..s_len {
            let mut a = alpha[s];
            if s >= 1 {
                a = logsumexp2(a, alpha[s - 1]);
            }
            if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                a = logsumexp2(a, alpha[s - 2]);
            }
            next[s] = a + lp[[t, ext[s]]];
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    let ll = if s_len > 1 {
        logsumexp2(alpha[s_len - 1], alpha[s_len - 2])
    } else {
        alpha[0]
    };
    Ok(CtcLikelihood {
        log_likelihood: ll,
        infeasible: ll == f64::NEG_INFINITY,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn cer_examples() {
        assert_eq!(cer_str("hello", "hello").unwrap().cer, 0.0);
        let b = cer_str("abc", "axc").unwrap();
        assert_eq!((b.substitutions, b.deletions, b.insertions), (1, 0, 0));
        assert!((b.cer - 100.0 / 3.0).abs() < 1e-12);
        let b = cer_str("ab", "aXb").unwrap();
        assert_eq!((b.substitutions, b.deletions, b.insertions), (0, 0, 1));
        assert_eq!(b.cer, 50.0);
    }

    #[test]
    fn cer_empty_cases() {
        assert!(matches!(cer_str("", "a"), Err(Error::UndefinedCer)));
        let b = cer_str("abc", "").unwrap();
        assert_eq!(b.deletions, 3);
        assert_eq!(b.cer, 100.0);
    }

    #[test]
    fn cer_counts_backspace_keys() {
        let b = cer_str("ab⌫c", "ac").unwrap();
        assert_eq!(b.reference_length, 4);
        assert_eq!(b.deletions, 2);
    }

    #[test]
    fn ctc_two_frame_example() {
        let logits = Array2::zeros((2, 2));
        let r = ctc_loglik(logits.view(), &[0], 1).unwrap();
        assert!((r.log_likelihood - 0.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ctc_empty_target_is_all_blank() {
        let logits = array![[0.3, -1.0, 2.0], [1.0, 0.0, 0.5]];
        let lp = log_softmax(logits.view());
        let r = ctc_loglik(logits.view(), &[], 2).unwrap();
        assert!((r.log_likelihood - (lp[[0, 2]] + lp[[1, 2]])).abs() < 1e-12);
    }

    #[test]
    fn ctc_infeasible() {
        let logits = Array2::zeros((2, 3));
        let r = ctc_loglik(logits.view(), &[0, 0], 2).unwrap();
        assert!(r.infeasible);
        assert_eq!(r.log_likelihood, f64::NEG_INFINITY);
    }
}
