//! Reference implementations used as test oracles. Each is written
//! independently of the library code it checks: plain loops, no shared
//! helpers.
#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// log10(|X_f|² + 1e-6) of frame `t` by direct DFT over samples
/// `16t − 48 ..= 16t + 15` (zeros outside the signal).
pub fn dft_frame(signal: &[f64], t: usize) -> Vec<f64> {
    let n = 64;
    let start = 16 * t as i64 - 48;
    (0..=32)
        .map(|f| {
            let (mut re, mut im) = (0.0, 0.0);
            for k in 0..n {
                let idx = start + k as i64;
                let x = if idx >= 0 && (idx as usize) < signal.len() {
                    signal[idx as usize]
                } else {
                    0.0
                };
                let ang = -2.0 * PI * (f * k) as f64 / n as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            (re * re + im * im + 1e-6).log10()
        })
        .collect()
}

/// Band of FFT bin `f` from its center frequency: intervals with inclusive
/// upper edges, the first also including its lower edge.
pub fn band_of_bin(f: usize) -> Option<usize> {
    let hz = f as f64 * 2000.0 / 64.0;
    let edges = [31.25, 62.5, 125.0, 250.0, 375.0, 687.5, 1000.0];
    if hz == edges[0] {
        return Some(0);
    }
    (0..6).find(|&b| hz > edges[b] && hz <= edges[b + 1])
}

/// Six-band sums of a `[T × B × C × 33]` tensor.
pub fn rsg_oracle(x: &Array4<f64>) -> Array4<f64> {
    let (t, b, c, _) = x.dim();
    let mut out = Array4::zeros((t, b, c, 6));
    for ti in 0..t {
        for bi in 0..b {
            for ci in 0..c {
                for f in 0..33 {
                    if let Some(band) = band_of_bin(f) {
                        out[[ti, bi, ci, band]] += x[[ti, bi, ci, f]];
                    }
                }
            }
        }
    }
    out
}

/// Per-frame normalized values of one feature stream, recomputing the
/// statistics from scratch at every frame. `window` limits the statistics to
/// the last `window` frames once past the warm-up.
pub fn rtn_oracle(xs: &[f64], warmup: usize, eps: f64, window: Option<usize>) -> Vec<f64> {
    let stats = |lo: usize, hi: usize| {
        let n = (hi - lo) as f64;
        let mut s = 0.0;
        let mut q = 0.0;
        for &x in &xs[lo..hi] {
            s += x;
            q += x * x;
        }
        let m = s / n;
        (m, (q / n - m * m + eps).max(0.0).sqrt())
    };
    let tw = warmup.min(xs.len());
    let (wm, ws) = stats(0, tw);
    (0..xs.len())
        .map(|t| {
            if t < tw {
                return (xs[t] - wm) / ws;
            }
            let lo = match window {
                Some(w) if t + 1 > w => t + 1 - w,
                _ => 0,
            };
            let (m, s) = stats(lo, t + 1);
            (xs[t] - m) / s
        })
        .collect()
}

pub fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let lz = m + z.ln();
        row.mapv_inplace(|v| v - lz);
    }
    out
}

pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Every label path of length T with its probability, as labelling → total
/// probability.
pub fn prefix_marginals(log_probs: &Array2<f64>, blank: usize) -> HashMap<Vec<usize>, f64> {
    let (t, v) = log_probs.dim();
    let mut out: HashMap<Vec<usize>, f64> = HashMap::new();
    let total = v.pow(t as u32);
    let mut path = vec![0usize; t];
    for code in 0..total {
        let mut c = code;
        let mut lp = 0.0;
        for (i, p) in path.iter_mut().enumerate() {
            *p = c % v;
            c /= v;
            lp += log_probs[[i, *p]];
        }
        *out.entry(collapse(&path, blank)).or_insert(0.0) += lp.exp();
    }
    out
}

/// ln P(target) by summing every path that collapses to it.
pub fn ctc_enumerate(log_probs: &Array2<f64>, target: &[usize], blank: usize) -> f64 {
    prefix_marginals(log_probs, blank)
        .get(target)
        .map(|p| p.ln())
        .unwrap_or(f64::NEG_INFINITY)
}

/// Unit-cost edit distance, two rolling rows.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            cur[j] = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Exact probabilities of the masking law by enumerating every
/// `(w, f0)` pair: (P[one mask is full width], P[two masks: some mask is
/// full width], P[two masks: union covers all bands]).
pub fn acm_exact(f_max: usize, bands: usize) -> (f64, f64, f64) {
    let mut single: Vec<(f64, usize, usize)> = Vec::new();
    for w_raw in 0..f_max {
        let w = w_raw.min(bands);
        let starts = bands - w + 1;
        for f0 in 0..starts {
            single.push((1.0 / f_max as f64 / starts as f64, f0, w));
        }
    }
    let full = |w: usize| w == bands;
    let p1: f64 = single.iter().filter(|m| full(m.2)).map(|m| m.0).sum();
    let (mut p_any, mut p_union) = (0.0, 0.0);
    for a in &single {
        for b in &single {
            let p = a.0 * b.0;
            if full(a.2) || full(b.2) {
                p_any += p;
            }
            let covered = (0..bands).all(|k| (k >= a.1 && k < a.1 + a.2) || (k >= b.1 && k < b.1 + b.2));
            if covered {
                p_union += p;
            }
        }
    }
    (p1, p_any, p_union)
}

pub fn random_string(r: &mut impl Rng, alphabet: &[char], max_len: usize) -> Vec<char> {
    let n = r.random_range(0..=max_len);
    (0..n).map(|_| alphabet[r.random_range(0..alphabet.len())]).collect()
}

pub fn random_logits(r: &mut impl Rng, t: usize, v: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((t, v), |_| r.random_range(-scale..scale))
}

/// Exact expected fraction of bands covered by the union of `n` masks.
pub fn acm_masked_fraction_exact(f_max: usize, bands: usize, n: usize) -> f64 {
    let mut single: Vec<(f64, u64)> = Vec::new();
    for w_raw in 0..f_max {
        let w = w_raw.min(bands);
        let starts = bands - w + 1;
        for f0 in 0..starts {
            let bits = (f0..f0 + w).fold(0u64, |acc, k| acc | 1 << k);
            single.push((1.0 / f_max as f64 / starts as f64, bits));
        }
    }
    let mut dist: Vec<(f64, u64)> = vec![(1.0, 0)];
    for _ in 0..n {
        let mut next = Vec::with_capacity(dist.len() * single.len());
        for &(p, bits) in &dist {
            for &(q, m) in &single {
                next.push((p * q, bits | m));
            }
        }
        dist = next;
    }
    dist.iter().map(|&(p, bits)| p * bits.count_ones() as f64 / bands as f64).sum()
}

pub fn random_linear(r: &mut impl Rng, inputs: usize, outputs: usize) -> emgtype_core::encoder::Linear {
    let bound = 1.0 / (inputs as f64).sqrt();
    emgtype_core::encoder::Linear::new(
        Array2::from_shape_fn((outputs, inputs), |_| r.random_range(-bound..bound)),
        ndarray::Array1::from_shape_fn(outputs, |_| r.random_range(-0.1..0.1)),
    )
    .expect("shapes")
}

fn dense_relu(l: &emgtype_core::encoder::Linear, h: &[f64], relu: bool) -> Vec<f64> {
    (0..l.outputs())
        .map(|j| {
            let mut acc = l.bias[j];
            for (i, v) in h.iter().enumerate() {
                acc += l.weight[[j, i]] * v;
            }
            if relu {
                acc.max(0.0)
            } else {
                acc
            }
        })
        .collect()
}

/// Mean over `offsets` of the MLP applied to the electrode axis rolled by
/// each offset (`x'[c] = x[c − o]`), one frame at a time.
pub fn rimlp_oracle(
    layers: &[emgtype_core::encoder::Linear],
    offsets: &[i64],
    x: &ndarray::Array3<f64>,
) -> Array2<f64> {
    let (t, c, f) = x.dim();
    let width = layers.last().map(|l| l.outputs()).unwrap_or(c * f);
    let mut out = Array2::zeros((t, width));
    for ti in 0..t {
        for &o in offsets {
            let mut h: Vec<f64> = Vec::with_capacity(c * f);
            for ci in 0..c {
                let src = (ci as i64 - o).rem_euclid(c as i64) as usize;
                for fi in 0..f {
                    h.push(x[[ti, src, fi]]);
                }
            }
            for l in layers {
                h = dense_relu(l, &h, true);
            }
            for (j, v) in h.iter().enumerate() {
                out[[ti, j]] += v / offsets.len() as f64;
            }
        }
    }
    out
}

/// `fc2(relu(fc1(x))) + x` per frame, without normalization.
pub fn fc_block_oracle(
    fc1: &emgtype_core::encoder::Linear,
    fc2: &emgtype_core::encoder::Linear,
    x: &Array2<f64>,
) -> Array2<f64> {
    let mut out = x.clone();
    for (ti, row) in x.rows().into_iter().enumerate() {
        let h = dense_relu(fc1, &row.to_vec(), true);
        let y = dense_relu(fc2, &h, false);
        for (j, v) in y.iter().enumerate() {
            out[[ti, j]] += v;
        }
    }
    out
}
