//! Forward passes of the toy decoder.
//!
//! Two modes share the same layer arithmetic:
//! * capture mode materializes every per-head `n × n` attention matrix and is
//!   meant for calibration and analysis only;
//! * streaming mode (prefill and single decode steps) computes attention one
//!   query row at a time and only ever holds `1 × n_keys` score buffers, which
//!   is what lets pruning run without full attention maps.

use serde::{Deserialize, Serialize};

use super::cache::KvCache;
use super::sequence::TokenSequence;
use super::weights::{LayerWeights, ModelWeights};
use crate::error::{Error, Result};
use crate::tensor::{matmul, mean_over_heads, softmax_prefix_in_place, softmax_rows, Matrix};

const NORM_EPS: f64 = 1e-6;

/// Per-head attention of one layer (1-based `layer`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTensor {
    pub layer: usize,
    pub heads: Vec<Matrix>,
}

impl AttentionTensor {
    pub fn new(layer: usize, heads: Vec<Matrix>) -> Result<Self> {
        let first = heads
            .first()
            .ok_or_else(|| Error::config("attention tensor without heads"))?;
        if !first.is_square() || heads.iter().any(|h| h.shape() != first.shape()) {
            return Err(Error::config(format!(
                "layer {layer}: heads must share one square shape"
            )));
        }
        Ok(Self { layer, heads })
    }

    pub fn n(&self) -> usize {
        self.heads[0].rows()
    }

    pub fn head_mean(&self) -> Matrix {
        mean_over_heads(&self.heads).expect("heads validated on construction")
    }

    /// `(head, row, |sum - 1|)` of the worst row across heads.
    pub fn worst_row(&self) -> (usize, usize, f64) {
        self.heads
            .iter()
            .enumerate()
            .map(|(h, m)| {
                let (r, e) = m.worst_row_sum_error();
                (h, r, e)
            })
            .fold((0, 0, 0.0), |a, b| if b.2 > a.2 { b } else { a })
    }
}

/// Receives the shape of every attention-score buffer the model allocates.
pub trait AttentionAudit {
    fn record(&mut self, layer: usize, rows: usize, cols: usize);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionAlloc {
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Audit hook that keeps every recorded allocation.
#[derive(Debug, Default, Clone)]
pub struct ShapeAudit {
    pub allocations: Vec<AttentionAlloc>,
}

impl AttentionAudit for ShapeAudit {
    fn record(&mut self, layer: usize, rows: usize, cols: usize) {
        self.allocations.push(AttentionAlloc { layer, rows, cols });
    }
}

impl ShapeAudit {
    /// Allocations of a square matrix with more than one row.
    pub fn square_allocations(&self) -> Vec<AttentionAlloc> {
        self.allocations
            .iter()
            .copied()
            .filter(|a| a.rows > 1 && a.rows == a.cols)
            .collect()
    }

    pub fn max_rows(&self) -> usize {
        self.allocations.iter().map(|a| a.rows).max().unwrap_or(0)
    }
}

fn audit_record(
    audit: &mut Option<&mut dyn AttentionAudit>,
    layer: usize,
    rows: usize,
    cols: usize,
) {
    if let Some(a) = audit.as_deref_mut() {
        a.record(layer, rows, cols);
    }
}

pub(crate) fn rms_norm(x: &[f64]) -> Vec<f64> {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let inv = 1.0 / (ms + NORM_EPS).sqrt();
    x.iter().map(|v| v * inv).collect()
}

pub(crate) fn vec_mat(x: &[f64], w: &Matrix) -> Vec<f64> {
    debug_assert_eq!(x.len(), w.rows());
    let mut out = vec![0.0; w.cols()];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &wij) in out.iter_mut().zip(w.row(i)) {
            *o += xi * wij;
        }
    }
    out
}

fn positional(pos: usize, width: usize, d: usize) -> impl Iterator<Item = f64> {
    (0..d).map(move |i| {
        if i >= width {
            return 0.0;
        }
        let pair = (i / 2) as f64;
        let freq = 1.0 / 10000f64.powf(2.0 * pair / width as f64);
        let angle = pos as f64 * freq;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

impl ModelWeights {
    /// Token embedding plus sinusoidal encoding of the original position.
    pub(crate) fn embed_token(&self, token: u32, pos: usize) -> Result<Vec<f64>> {
        let vocab = self.config.vocab_size;
        if token as usize >= vocab {
            return Err(Error::input(format!(
                "token id {token} at position {pos} outside vocabulary of {vocab}"
            )));
        }
        let d = self.config.model_dim;
        let width = d - self.reserved_dims;
        Ok(self
            .embed
            .row(token as usize)
            .iter()
            .zip(positional(pos, width, d))
            .map(|(e, p)| e + p)
            .collect())
    }

    pub(crate) fn logits(&self, hidden: &[f64]) -> Vec<f64> {
        vec_mat(&rms_norm(hidden), &self.unembed)
    }

    fn scale(&self) -> f64 {
        1.0 / (self.config.head_dim() as f64).sqrt()
    }
}

fn ffn_residual(lw: &LayerWeights, x: &mut [f64]) {
    let mut up = vec_mat(&rms_norm(x), &lw.w_up);
    for v in &mut up {
        *v = v.max(0.0);
    }
    for (xi, di) in x.iter_mut().zip(vec_mat(&up, &lw.w_down)) {
        *xi += di;
    }
}

struct Projected {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
}

fn project(lw: &LayerWeights, x: &[f64]) -> Projected {
    let n = rms_norm(x);
    Projected {
        q: vec_mat(&n, &lw.wq),
        k: vec_mat(&n, &lw.wk),
        v: vec_mat(&n, &lw.wv),
    }
}

/// Attention of one query over `keys`/`values` (all heads). Writes the
/// concatenated head outputs into `out` and, when requested, accumulates the
/// head-averaged probability row into `mean_row`.
#[allow(clippy::too_many_arguments)]
fn attend_one(
    weights: &ModelWeights,
    layer: usize,
    q: &[f64],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
    out: &mut [f64],
    mut mean_row: Option<&mut [f64]>,
    audit: &mut Option<&mut dyn AttentionAudit>,
) {
    let heads = weights.config.heads;
    let hd = weights.config.head_dim();
    let scale = weights.scale();
    let n = keys.len();
    for h in 0..heads {
        let hs = h * hd..(h + 1) * hd;
        let qh = &q[hs.clone()];
        audit_record(audit, layer, 1, n);
        let mut scores: Vec<f64> = keys
            .iter()
            .map(|k| {
                qh.iter()
                    .zip(&k[hs.clone()])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    * scale
            })
            .collect();
        softmax_prefix_in_place(&mut scores, n);
        let oh = &mut out[hs.clone()];
        oh.iter_mut().for_each(|o| *o = 0.0);
        for (p, v) in scores.iter().zip(values) {
            for (o, vv) in oh.iter_mut().zip(&v[hs.clone()]) {
                *o += p * vv;
            }
        }
        if let Some(row) = mean_row.as_deref_mut() {
            for (r, p) in row.iter_mut().zip(&scores) {
                *r += p / heads as f64;
            }
        }
    }
}

/// Output of [`forward_capture`].
#[derive(Debug, Clone)]
pub struct CaptureOutput {
    /// `K × vocab` logits, one row per position.
    pub logits: Matrix,
    pub attention: Vec<AttentionTensor>,
}

/// Full forward pass that materializes every per-head attention matrix.
/// Analysis only: this mode relies on full attention maps.
pub fn forward_capture(weights: &ModelWeights, sequence: &TokenSequence) -> Result<CaptureOutput> {
    forward_capture_audited(weights, sequence, None)
}

pub fn forward_capture_audited(
    weights: &ModelWeights,
    sequence: &TokenSequence,
    mut audit: Option<&mut dyn AttentionAudit>,
) -> Result<CaptureOutput> {
    let cfg = &weights.config;
    let n = sequence.len();
    if n == 0 {
        return Err(Error::input("empty sequence"));
    }
    let d = cfg.model_dim;
    let hd = cfg.head_dim();
    let mut hidden = sequence
        .tokens()
        .iter()
        .enumerate()
        .map(|(p, &t)| weights.embed_token(t, p))
        .collect::<Result<Vec<_>>>()?;
    let mask: Vec<usize> = (1..=n).collect();
    let mut attention = Vec::with_capacity(cfg.layers);
    for (l, lw) in weights.layers.iter().enumerate() {
        let proj: Vec<Projected> = hidden.iter().map(|x| project(lw, x)).collect();
        let mut heads = Vec::with_capacity(cfg.heads);
        let mut concat = vec![vec![0.0; d]; n];
        for h in 0..cfg.heads {
            let hs = h * hd..(h + 1) * hd;
            let mut scores = Matrix::zeros(n, n);
            audit_record(&mut audit, l + 1, n, n);
            for i in 0..n {
                let qi = &proj[i].q[hs.clone()];
                for (j, pj) in proj.iter().enumerate().take(i + 1) {
                    let s: f64 = qi.iter().zip(&pj.k[hs.clone()]).map(|(a, b)| a * b).sum();
                    scores.set(i, j, s * weights.scale());
                }
            }
            let probs = softmax_rows(&scores, Some(&mask))?;
            let vh = Matrix::from_rows(
                &proj
                    .iter()
                    .map(|p| p.v[hs.clone()].to_vec())
                    .collect::<Vec<_>>(),
            )?;
            let out = matmul(&probs, &vh)?;
            for (i, row) in concat.iter_mut().enumerate() {
                row[hs.clone()].copy_from_slice(out.row(i));
            }
            heads.push(probs);
        }
        for (x, c) in hidden.iter_mut().zip(&concat) {
            for (xi, oi) in x.iter_mut().zip(vec_mat(c, &lw.wo)) {
                *xi += oi;
            }
            ffn_residual(lw, x);
        }
        attention.push(AttentionTensor::new(l + 1, heads)?);
    }
    let logit_rows: Vec<Vec<f64>> = hidden.iter().map(|x| weights.logits(x)).collect();
    Ok(CaptureOutput {
        logits: Matrix::from_rows(&logit_rows)?,
        attention,
    })
}

/// Decides, after each prefill layer, which positions continue to the next.
pub trait LayerPruner {
    /// `layer` is 1-based. `active` lists the positions processed at this
    /// layer; `last_query` is the head-averaged attention row of the last
    /// active token over them. Returning `Some(next)` narrows the positions
    /// carried into layer `layer + 1`; `next` must be a sorted subset that
    /// keeps the last position.
    fn after_layer(
        &mut self,
        layer: usize,
        active: &[usize],
        last_query: &[f64],
    ) -> Result<Option<Vec<usize>>>;

    /// Hook after each decode step; may compact the cache.
    fn after_step(&mut self, _cache: &mut KvCache, _rows: &[LastQueryRow]) -> Result<()> {
        Ok(())
    }
}

/// Result of a streaming prefill pass.
#[derive(Debug, Clone)]
pub struct PrefillOutput {
    /// Logits of the last prompt token.
    pub logits: Vec<f64>,
    pub cache: KvCache,
    /// Number of positions processed at each layer.
    pub active_counts: Vec<usize>,
}

/// Layer-by-layer prefill over the whole prompt, never materializing an
/// `n × n` matrix. With a pruner, positions dropped after layer `l` are
/// absent from layers `l+1..` (and from their caches).
pub fn prefill(
    weights: &ModelWeights,
    sequence: &TokenSequence,
    mut pruner: Option<&mut dyn LayerPruner>,
    mut audit: Option<&mut dyn AttentionAudit>,
) -> Result<PrefillOutput> {
    let cfg = &weights.config;
    let n = sequence.len();
    if n == 0 {
        return Err(Error::input("empty sequence"));
    }
    let d = cfg.model_dim;
    let mut active: Vec<usize> = (0..n).collect();
    let mut hidden = sequence
        .tokens()
        .iter()
        .enumerate()
        .map(|(p, &t)| weights.embed_token(t, p))
        .collect::<Result<Vec<_>>>()?;
    let mut cache = KvCache::new(cfg.layers);
    let mut active_counts = Vec::with_capacity(cfg.layers);
    for (l, lw) in weights.layers.iter().enumerate() {
        active_counts.push(active.len());
        let proj: Vec<Projected> = hidden.iter().map(|x| project(lw, x)).collect();
        let keys: Vec<Vec<f64>> = proj.iter().map(|p| p.k.clone()).collect();
        let values: Vec<Vec<f64>> = proj.iter().map(|p| p.v.clone()).collect();
        let last = active.len() - 1;
        let mut last_query = vec![0.0; active.len()];
        let mut concat = vec![0.0; d];
        for (i, x) in hidden.iter_mut().enumerate() {
            let mean = (i == last).then_some(&mut last_query[..]);
            attend_one(
                weights,
                l + 1,
                &proj[i].q,
                &keys[..=i],
                &values[..=i],
                &mut concat,
                mean,
                &mut audit,
            );
            for (xi, oi) in x.iter_mut().zip(vec_mat(&concat, &lw.wo)) {
                *xi += oi;
            }
            ffn_residual(lw, x);
        }
        let layer_cache = cache.layer_mut(l);
        for ((&p, k), v) in active.iter().zip(keys).zip(values) {
            layer_cache.push(p, k, v);
        }
        if let Some(pr) = pruner.as_deref_mut() {
            if let Some(next) = pr.after_layer(l + 1, &active, &last_query)? {
                let keep = subset_mask(&active, &next).ok_or_else(|| {
                    Error::internal(format!(
                        "pruner returned a set after layer {} that is not a subset of the active positions",
                        l + 1
                    ))
                })?;
                if next.last() != active.last() {
                    return Err(Error::internal(format!(
                        "pruner dropped the last position after layer {}",
                        l + 1
                    )));
                }
                let mut it = keep.iter();
                hidden.retain(|_| *it.next().unwrap());
                active = next;
            }
        }
    }
    let logits = weights.logits(hidden.last().expect("last position is always active"));
    Ok(PrefillOutput {
        logits,
        cache,
        active_counts,
    })
}

fn subset_mask(active: &[usize], next: &[usize]) -> Option<Vec<bool>> {
    if next.windows(2).any(|w| w[0] >= w[1]) {
        return None;
    }
    let mut mask = vec![false; active.len()];
    let mut k = 0;
    for (i, &p) in active.iter().enumerate() {
        if k < next.len() && next[k] == p {
            mask[i] = true;
            k += 1;
        }
    }
    (k == next.len()).then_some(mask)
}

/// Head-averaged attention row of the newest query at one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LastQueryRow {
    pub layer: usize,
    pub positions: Vec<usize>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub logits: Vec<f64>,
    pub last_query_rows: Vec<LastQueryRow>,
}

/// One decoding step attending only to cached rows. `active[l]` must equal
/// the positions cached at layer `l` before the step; the new token is
/// appended to every layer's cache at `position`.
pub fn forward_pruned_step<A: AsRef<[usize]>>(
    weights: &ModelWeights,
    cache: &mut KvCache,
    token: u32,
    position: usize,
    active: &[A],
    mut audit: Option<&mut dyn AttentionAudit>,
) -> Result<StepOutput> {
    let cfg = &weights.config;
    cache.check_consistent(active)?;
    if let Some(&p) = (0..cfg.layers)
        .filter_map(|l| cache.layer(l).positions().last())
        .max()
    {
        if position <= p {
            return Err(Error::internal(format!(
                "step position {position} does not follow cached position {p}"
            )));
        }
    }
    let mut x = weights.embed_token(token, position)?;
    let mut concat = vec![0.0; cfg.model_dim];
    let mut rows = Vec::with_capacity(cfg.layers);
    for (l, lw) in weights.layers.iter().enumerate() {
        let proj = project(lw, &x);
        cache.layer_mut(l).push(position, proj.k, proj.v);
        let layer_cache = cache.layer(l);
        let mut mean = vec![0.0; layer_cache.len()];
        attend_one(
            weights,
            l + 1,
            &proj.q,
            layer_cache.keys(),
            layer_cache.values(),
            &mut concat,
            Some(&mut mean),
            &mut audit,
        );
        rows.push(LastQueryRow {
            layer: l + 1,
            positions: layer_cache.positions().to_vec(),
            scores: mean,
        });
        for (xi, oi) in x.iter_mut().zip(vec_mat(&concat, &lw.wo)) {
            *xi += oi;
        }
        ffn_residual(lw, &mut x);
    }
    Ok(StepOutput {
        logits: weights.logits(&x),
        last_query_rows: rows,
    })
}
