use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PruneConfig;
use super::strategy::Strategy;
use crate::error::{Error, Result};
use crate::model::TokenSequence;

/// Surviving original positions at one layer, with the protected subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSet {
    indices: Vec<usize>,
    protected: Vec<bool>,
}

impl AsRef<[usize]> for ActiveSet {
    fn as_ref(&self) -> &[usize] {
        &self.indices
    }
}

impl ActiveSet {
    /// `indices` must be strictly increasing; `protected` is aligned with it.
    /// The last entry is always marked protected.
    pub fn new(indices: Vec<usize>, mut protected: Vec<bool>) -> Result<Self> {
        if indices.len() != protected.len() {
            return Err(Error::internal("protected flags not aligned with indices"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::internal(
                "active indices must be strictly increasing",
            ));
        }
        if let Some(last) = protected.last_mut() {
            *last = true;
        }
        Ok(Self { indices, protected })
    }

    /// Every position of `seq`, protected per `cfg`.
    pub fn full(seq: &TokenSequence, cfg: &PruneConfig) -> Self {
        let protected = seq
            .modalities()
            .into_iter()
            .map(|m| cfg.is_protected_modality(m))
            .collect();
        Self::new((0..seq.len()).collect(), protected).expect("0..n is increasing")
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.indices.binary_search(&pos).is_ok()
    }

    pub fn is_protected(&self, pos: usize) -> bool {
        self.indices
            .binary_search(&pos)
            .is_ok_and(|i| self.protected[i])
    }

    pub fn protected_positions(&self) -> Vec<usize> {
        self.iter().filter(|(_, p)| *p).map(|(i, _)| i).collect()
    }

    /// Active positions that may be pruned.
    pub fn prunable(&self) -> Vec<usize> {
        self.iter().filter(|(_, p)| !*p).map(|(i, _)| i).collect()
    }

    pub fn n_prunable(&self) -> usize {
        self.protected.iter().filter(|p| !**p).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.protected.iter().copied())
    }

    /// A copy without `removed` (sorted). Protected positions are never removed.
    pub fn without(&self, removed: &[usize]) -> Result<Self> {
        if let Some(&p) = removed.iter().find(|&&p| self.is_protected(p)) {
            return Err(Error::internal(format!(
                "attempted to remove protected position {p}"
            )));
        }
        let (indices, protected) = self
            .iter()
            .filter(|(i, _)| removed.binary_search(i).is_err())
            .unzip();
        Ok(Self { indices, protected })
    }
}

/// Normalized last-query importance for each active position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScores {
    pub positions: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Tolerance on the normalization of an incoming last-query row.
pub const SCORE_SUM_TOL: f64 = 1e-6;

/// Validates a head-averaged, softmax-normalized last-query row and pairs
/// it with token positions.
pub fn fine_scores(positions: &[usize], row: &[f64]) -> Result<ImportanceScores> {
    if positions.len() != row.len() {
        return Err(Error::internal(format!(
            "{} scores for {} positions",
            row.len(),
            positions.len()
        )));
    }
    if row.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::internal(
            "importance scores must be finite and nonnegative",
        ));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SCORE_SUM_TOL {
        return Err(Error::internal(format!(
            "last-query row sums to {sum}, not 1"
        )));
    }
    Ok(ImportanceScores {
        positions: positions.to_vec(),
        scores: row.to_vec(),
    })
}

/// `floor(ratio × n)`, guarded against products landing a hair under an
/// integer.
pub fn removal_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Removes the lowest-scoring `floor(P × n_prunable)` tokens.
pub fn apply_fine(
    scores: &ImportanceScores,
    active: &ActiveSet,
    cfg: &PruneConfig,
    min_active: usize,
) -> Result<ActiveSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    apply_fine_with(
        Strategy::LowAttentive,
        scores,
        active,
        cfg.fine_ratio,
        min_active,
        &mut rng,
    )
    .map(|(a, _)| a)
}

/// Fine stage under an arbitrary attentive policy. Returns the new set and
/// the removed positions.
pub fn apply_fine_with(
    strategy: Strategy,
    scores: &ImportanceScores,
    active: &ActiveSet,
    ratio: f64,
    min_active: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(ActiveSet, Vec<usize>)> {
    if scores.positions != active.indices() {
        return Err(Error::internal(
            "scores are not aligned with the active set",
        ));
    }
    let candidates: Vec<(usize, f64)> = scores
        .positions
        .iter()
        .zip(&scores.scores)
        .zip(&active.protected)
        .filter(|(_, p)| !**p)
        .map(|((&i, &s), _)| (i, s))
        .collect();
    let headroom = active.len().saturating_sub(min_active);
    let count = removal_count(ratio, candidates.len()).min(headroom);
    if count == 0 {
        return Ok((active.clone(), Vec::new()));
    }
    let removed = strategy.select(&candidates, count, rng);
    Ok((active.without(&removed)?, removed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(n: usize) -> ActiveSet {
        let mut prot = vec![false; n];
        let s = ActiveSet::new((0..n).collect(), vec![false; n]).unwrap();
        // The constructor protects the last entry; undo for raw tests.
        prot[n - 1] = false;
        ActiveSet {
            protected: prot,
            ..s
        }
    }

    fn cfg(p: f64) -> PruneConfig {
        PruneConfig {
            fine_ratio: p,
            ..PruneConfig::default()
        }
    }

    #[test]
    fn fine_scores_validation() {
        let ok = fine_scores(&[0, 1, 2, 3], &[0.25; 4]).unwrap();
        assert_eq!(ok.scores, vec![0.25; 4]);
        assert!(matches!(
            fine_scores(&[0, 1], &[0.6, 0.5]),
            Err(Error::Internal(_))
        ));
        assert_eq!(fine_scores(&[7], &[1.0]).unwrap().positions, vec![7]);
        assert!(fine_scores(&[0, 1], &[1.0]).is_err());
    }

    #[test]
    fn removes_lowest_fifth() {
        let a = open(5);
        let s = ImportanceScores {
            positions: (0..5).collect(),
            scores: vec![0.1, 0.4, 0.05, 0.25, 0.2],
        };
        let out = apply_fine(&s, &a, &cfg(0.2), 1).unwrap();
        assert_eq!(out.indices(), &[0, 1, 3, 4]);
    }

    #[test]
    fn zero_ratio_is_noop() {
        let a = open(5);
        let s = ImportanceScores {
            positions: (0..5).collect(),
            scores: vec![0.2; 5],
        };
        assert_eq!(apply_fine(&s, &a, &cfg(0.0), 1).unwrap(), a);
    }

    #[test]
    fn ties_keep_earlier() {
        // Four prunable tokens plus a protected last one.
        let a = ActiveSet::new((0..5).collect(), vec![false; 5]).unwrap();
        let s = ImportanceScores {
            positions: (0..5).collect(),
            scores: vec![0.2; 5],
        };
        let out = apply_fine(&s, &a, &cfg(0.5), 1).unwrap();
        assert_eq!(out.indices(), &[0, 1, 4]);
    }

    #[test]
    fn min_active_floor() {
        let a = open(10);
        let s = ImportanceScores {
            positions: (0..10).collect(),
            scores: vec![0.1; 10],
        };
        let out = apply_fine(&s, &a, &cfg(0.9), 8).unwrap();
        assert_eq!(out.len(), 8);
    }

    #[test]
    fn protected_never_removed() {
        let a = ActiveSet::new((0..5).collect(), vec![true, false, true, false, false]).unwrap();
        let s = ImportanceScores {
            positions: (0..5).collect(),
            scores: vec![0.0, 0.1, 0.0, 0.5, 0.4],
        };
        let out = apply_fine(&s, &a, &cfg(0.5), 1).unwrap();
        assert_eq!(out.indices(), &[0, 2, 3, 4]);
        assert!(a.without(&[0]).is_err());
    }

    #[test]
    fn misaligned_scores() {
        let a = open(3);
        let s = ImportanceScores {
            positions: vec![0, 1],
            scores: vec![0.5, 0.5],
        };
        assert!(apply_fine(&s, &a, &cfg(0.2), 1).is_err());
    }

    #[test]
    fn removal_count_floor() {
        assert_eq!(removal_count(0.2, 5), 1);
        assert_eq!(removal_count(0.2, 4), 0);
        assert_eq!(removal_count(0.29, 100), 29);
        assert_eq!(removal_count(0.0, 100), 0);
    }
}
