//! Attention rollout: residual mixing of head-averaged attention and the
//! cumulative product across layers.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttentionTensor, TokenSequence};
use crate::tensor::{matmul, Matrix};

pub const DEFAULT_ALPHA: f64 = 0.5;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// `alpha * A + (1 - alpha) * I`.
pub fn mix_residual(a: &Matrix, alpha: f64) -> Result<Matrix> {
    check_alpha(alpha)?;
    if !a.is_square() {
        return Err(Error::config(format!(
            "residual mixing needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let diag = if idx / n == idx % n { 1.0 - alpha } else { 0.0 };
            alpha * v + diag
        })
        .collect();
    Matrix::new(n, n, data)
}

/// Cumulative rollout `R` after `layer` layers.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutState {
    pub alpha: f64,
    pub layer: usize,
    pub r: Matrix,
}

impl RolloutState {
    /// Identity rollout at layer 0.
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            alpha,
            layer: 0,
            r: Matrix::identity(n),
        })
    }

    /// Folds in the head-averaged attention of the next layer:
    /// `R <- mix(A_next) × R`.
    pub fn accumulate(self, a_next: &Matrix) -> Result<Self> {
        if a_next.shape() != self.r.shape() {
            return Err(Error::config(format!(
                "rollout is {}x{} but layer {} attention is {}x{}",
                self.r.rows(),
                self.r.cols(),
                self.layer + 1,
                a_next.rows(),
                a_next.cols()
            )));
        }
        let mixed = mix_residual(a_next, self.alpha)?;
        Ok(Self {
            alpha: self.alpha,
            layer: self.layer + 1,
            r: matmul(&mixed, &self.r)?,
        })
    }
}

/// Rollout over the first `upto_layer` layers of `attn`; `upto_layer = 0`
/// gives the identity.
pub fn rollout_at(attn: &[AttentionTensor], upto_layer: usize, alpha: f64) -> Result<Matrix> {
    if upto_layer > attn.len() {
        return Err(Error::config(format!(
            "rollout requested up to layer {upto_layer} but only {} layers are available",
            attn.len()
        )));
    }
    let n = attn.first().map_or(0, AttentionTensor::n);
    let mut state = RolloutState::new(n, alpha)?;
    for layer in &attn[..upto_layer] {
        state = state.accumulate(&layer.head_mean())?;
    }
    Ok(state.r)
}

/// Mean of `R[i][j]` over `i ∈ query_rows`, per column `j`.
pub fn influence_scores(r: &Matrix, query_rows: &[usize]) -> Result<Vec<f64>> {
    if query_rows.is_empty() {
        return Err(Error::config(
            "influence scores need at least one query row",
        ));
    }
    if let Some(bad) = query_rows.iter().find(|&&i| i >= r.rows()) {
        return Err(Error::config(format!(
            "query row {bad} outside rollout of {} rows",
            r.rows()
        )));
    }
    let mut scores = vec![0.0; r.cols()];
    for &i in query_rows {
        for (s, v) in scores.iter_mut().zip(r.row(i)) {
            *s += v;
        }
    }
    let q = query_rows.len() as f64;
    scores.iter_mut().for_each(|s| *s /= q);
    Ok(scores)
}

/// Which rollout rows are averaged into influence scores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QueryRows {
    /// Every position after the last visual/audio token.
    #[default]
    AfterMultimodal,
    /// Only the final position.
    Last,
    /// Every row.
    All,
}

impl QueryRows {
    pub fn resolve(&self, seq: &TokenSequence) -> Vec<usize> {
        let n = seq.len();
        match self {
            QueryRows::Last => vec![n - 1],
            QueryRows::All => (0..n).collect(),
            QueryRows::AfterMultimodal => {
                let start = seq
                    .modalities()
                    .iter()
                    .rposition(|m| m.is_multimodal())
                    .map_or(0, |p| p + 1);
                if start >= n {
                    vec![n - 1]
                } else {
                    (start..n).collect()
                }
            }
        }
    }
}

/// `%.6g`-style rendering: six significant digits, trailing zeros trimmed.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.5e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, v)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Heatmap CSV: a header line holding `n`, then `n` comma-separated rows.
pub fn heatmap_csv(m: &Matrix) -> String {
    let mut out = String::new();
    writeln!(out, "{}", m.rows()).unwrap();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format_sig6(*v)).collect();
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn tensor(layer: usize, a: Matrix) -> AttentionTensor {
        AttentionTensor::new(layer, vec![a]).unwrap()
    }

    #[test]
    fn mix_limits_and_worked_case() {
        let a = m(&[&[1.0, 0.0], &[0.5, 0.5]]);
        assert_eq!(mix_residual(&a, 0.0).unwrap(), Matrix::identity(2));
        assert_eq!(mix_residual(&a, 1.0).unwrap(), a);
        assert_eq!(
            mix_residual(&a, 0.5).unwrap(),
            m(&[&[1.0, 0.0], &[0.25, 0.75]])
        );
        assert!(matches!(mix_residual(&a, 1.5), Err(Error::Config(_))));
        assert!(mix_residual(&a, -0.1).is_err());
    }

    #[test]
    fn accumulate_two_layers() {
        let a = m(&[&[1.0, 0.0], &[0.5, 0.5]]);
        let s = RolloutState::new(2, 0.5).unwrap();
        let s = s.accumulate(&a).unwrap();
        assert_eq!(s.r, mix_residual(&a, 0.5).unwrap());
        let s = s.accumulate(&a).unwrap();
        assert_eq!(s.layer, 2);
        assert_eq!(s.r, m(&[&[1.0, 0.0], &[0.4375, 0.5625]]));
    }

    #[test]
    fn accumulate_shape_mismatch() {
        let s = RolloutState::new(3, 0.5).unwrap();
        assert!(s.accumulate(&Matrix::identity(2)).is_err());
    }

    #[test]
    fn identity_attention_is_fixed_point() {
        for alpha in [0.0, 0.3, 1.0] {
            let stack: Vec<_> = (1..=6).map(|l| tensor(l, Matrix::identity(4))).collect();
            assert_eq!(rollout_at(&stack, 6, alpha).unwrap(), Matrix::identity(4));
        }
    }

    #[test]
    fn rollout_bounds() {
        let stack = vec![tensor(1, m(&[&[1.0, 0.0], &[0.5, 0.5]]))];
        assert_eq!(rollout_at(&stack, 0, 0.5).unwrap(), Matrix::identity(2));
        assert!(rollout_at(&stack, 2, 0.5).is_err());
    }

    #[test]
    fn influence_examples() {
        let r = Matrix::identity(4);
        assert_eq!(
            influence_scores(&r, &[3]).unwrap(),
            vec![0.0, 0.0, 0.0, 1.0]
        );
        let w = m(&[&[1.0, 0.0], &[0.4375, 0.5625]]);
        assert_eq!(influence_scores(&w, &[1]).unwrap(), vec![0.4375, 0.5625]);
        let all = influence_scores(&w, &[0, 1]).unwrap();
        assert_eq!(all, vec![(1.0 + 0.4375) / 2.0, 0.5625 / 2.0]);
        assert!(influence_scores(&w, &[]).is_err());
        assert!(influence_scores(&w, &[2]).is_err());
    }

    #[test]
    fn query_rows_after_multimodal() {
        let seq = TokenSequence::contiguous(&[1, 2], &[3], &[4, 5]).unwrap();
        assert_eq!(QueryRows::AfterMultimodal.resolve(&seq), vec![3, 4]);
        assert_eq!(QueryRows::Last.resolve(&seq), vec![4]);
        let mm_only = TokenSequence::contiguous(&[1, 2], &[3], &[]).unwrap();
        assert_eq!(QueryRows::AfterMultimodal.resolve(&mm_only), vec![2]);
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(0.4375), "0.4375");
        assert_eq!(format_sig6(1.0 / 3.0), "0.333333");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(1234567.0), "1.23457e+06");
        assert_eq!(format_sig6(0.0000123456789), "1.23457e-05");
        assert_eq!(format_sig6(0.0001), "0.0001");
        assert_eq!(format_sig6(-2.5), "-2.5");
    }

    #[test]
    fn heatmap_layout() {
        let csv = heatmap_csv(&m(&[&[1.0, 0.0], &[0.4375, 0.5625]]));
        assert_eq!(csv, "2\n1,0\n0.4375,0.5625\n");
    }
}
