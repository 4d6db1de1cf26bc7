use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::active::{apply_fine_with, fine_scores, ActiveSet, ImportanceScores};
use super::config::{PruneConfig, Retention};
use super::global::apply_global;
use super::strategy::Strategy;
use crate::error::{Error, Result};
use crate::model::{KvCache, LastQueryRow, LayerPruner, Modality, TokenSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Global,
    Fine,
}

/// One pruning decision taken after `layer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDecision {
    pub layer: usize,
    pub stage: Stage,
    pub active_before: usize,
    pub active_after: usize,
    pub removed: Vec<usize>,
}

/// Everything a pruned run decided, in the order it happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneDecisions {
    pub global_strategy: Strategy,
    pub fine_strategy: Strategy,
    pub cutoff: usize,
    pub tau: Option<f64>,
    pub alpha: f64,
    pub fine_ratio: f64,
    pub middle_layer: usize,
    pub min_active: usize,
    /// Protected tokens never count toward the `P` denominator.
    pub protected_in_ratio_base: bool,
    pub decisions: Vec<LayerDecision>,
    /// Compactions applied during generation (only when enabled).
    pub generation_decisions: Vec<LayerDecision>,
}

/// Prefill-time implementation of the two-stage pipeline: global pruning
/// after the middle layer, then fine pruning after each later layer.
pub struct Pipeline {
    cfg: PruneConfig,
    layers: usize,
    middle_layer: usize,
    fine_end: usize,
    min_active: usize,
    prompt_len: usize,
    modalities: Vec<Modality>,
    global_target: ActiveSet,
    global_strategy: Strategy,
    fine_strategy: Strategy,
    profile: Option<Vec<f64>>,
    rng: ChaCha8Rng,
    current: ActiveSet,
    retained: Vec<usize>,
    log: PruneDecisions,
}

impl Pipeline {
    /// FastAV defaults: low-informative global (cutoff + retention),
    /// low-attentive fine.
    pub fn new(
        sequence: &TokenSequence,
        layers: usize,
        cutoff: usize,
        cfg: &PruneConfig,
    ) -> Result<Self> {
        Self::with_strategies(
            sequence,
            layers,
            cutoff,
            cfg,
            Strategy::LowInformative,
            Strategy::LowAttentive,
            None,
            0,
        )
    }

    /// Ablation variant. Non-default global strategies remove as many
    /// tokens as the default global stage would, chosen by their own
    /// policy; informative policies rank by the calibrated rollout
    /// `profile`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_strategies(
        sequence: &TokenSequence,
        layers: usize,
        cutoff: usize,
        cfg: &PruneConfig,
        global_strategy: Strategy,
        fine_strategy: Strategy,
        profile: Option<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let middle_layer = cfg.middle_layer_for(layers);
        if middle_layer == 0 || middle_layer > layers {
            return Err(Error::config(format!(
                "middle layer {middle_layer} outside [1, {layers}]"
            )));
        }
        if fine_strategy.uses_rollout() {
            return Err(Error::config(format!(
                "fine stage cannot use '{fine_strategy}': rollout needs full attention maps"
            )));
        }
        if global_strategy == Strategy::TopInformative && profile.is_none() {
            return Err(Error::config(
                "top_informative needs a calibrated rollout profile",
            ));
        }
        let global_target = apply_global(sequence, cutoff, cfg)?;
        let retained = match cfg.retention {
            Retention::KeepFirstAudio { .. } if cfg.protect_retained => global_target
                .iter()
                .filter(|(p, _)| sequence.modality_at(*p) == Some(Modality::Audio))
                .map(|(p, _)| p)
                .collect(),
            _ => Vec::new(),
        };
        let min_active = cfg.min_active_for(sequence);
        let tau = match cfg.global_rule {
            super::GlobalRule::RolloutThreshold { tau } => Some(tau),
            super::GlobalRule::PositionCutoff { .. } => None,
        };
        Ok(Self {
            layers,
            middle_layer,
            fine_end: cfg.fine_end_for(layers),
            min_active,
            prompt_len: sequence.len(),
            modalities: sequence.modalities(),
            global_target,
            global_strategy,
            fine_strategy,
            profile,
            rng: ChaCha8Rng::seed_from_u64(seed),
            current: ActiveSet::full(sequence, cfg),
            retained,
            log: PruneDecisions {
                global_strategy,
                fine_strategy,
                cutoff,
                tau,
                alpha: cfg.alpha,
                fine_ratio: cfg.fine_ratio,
                middle_layer,
                min_active,
                protected_in_ratio_base: false,
                decisions: Vec::new(),
                generation_decisions: Vec::new(),
            },
            cfg: cfg.clone(),
        })
    }

    pub fn decisions(&self) -> &PruneDecisions {
        &self.log
    }

    pub fn into_decisions(self) -> PruneDecisions {
        self.log
    }

    pub fn current(&self) -> &ActiveSet {
        &self.current
    }

    fn global_step(&mut self, last_query: &[f64]) -> Result<(ActiveSet, Vec<usize>)> {
        let removed_by_default: Vec<usize> = self
            .current
            .indices()
            .iter()
            .copied()
            .filter(|p| !self.global_target.contains(*p))
            .collect();
        if self.global_strategy == Strategy::LowInformative {
            return Ok((self.global_target.clone(), removed_by_default));
        }
        let count = removed_by_default.len();
        let candidates: Vec<(usize, f64)> = self
            .current
            .iter()
            .zip(last_query)
            .filter(|((p, prot), _)| !*prot && self.modalities[*p].is_multimodal())
            .map(|((p, _), &s)| {
                let score = match self.global_strategy {
                    Strategy::TopInformative => self
                        .profile
                        .as_ref()
                        .and_then(|pr| pr.get(p).copied())
                        .unwrap_or(0.0),
                    _ => s,
                };
                (p, score)
            })
            .collect();
        let removed = self
            .global_strategy
            .select(&candidates, count, &mut self.rng);
        Ok((self.current.without(&removed)?, removed))
    }

    fn protection_of(&self, pos: usize, last: usize) -> bool {
        let m = if pos < self.prompt_len {
            self.modalities[pos]
        } else {
            Modality::Generated
        };
        pos == last
            || self.cfg.is_protected_modality(m)
            || self.retained.binary_search(&pos).is_ok()
    }

    fn is_fine_layer(&self, layer: usize) -> bool {
        layer > self.middle_layer && layer <= self.fine_end && layer < self.layers
    }
}

impl LayerPruner for Pipeline {
    fn after_layer(
        &mut self,
        layer: usize,
        active: &[usize],
        last_query: &[f64],
    ) -> Result<Option<Vec<usize>>> {
        if active != self.current.indices() {
            return Err(Error::internal(format!(
                "layer {layer}: model processed {} positions but pipeline tracks {}",
                active.len(),
                self.current.len()
            )));
        }
        let before = self.current.len();
        let (next, removed, stage) = if layer == self.middle_layer && layer < self.layers {
            let (next, removed) = self.global_step(last_query)?;
            (next, removed, Stage::Global)
        } else if self.is_fine_layer(layer) {
            let scores = fine_scores(active, last_query)?;
            let (next, removed) = apply_fine_with(
                self.fine_strategy,
                &scores,
                &self.current,
                self.cfg.fine_ratio,
                self.min_active,
                &mut self.rng,
            )?;
            (next, removed, Stage::Fine)
        } else {
            return Ok(None);
        };
        self.log.decisions.push(LayerDecision {
            layer,
            stage,
            active_before: before,
            active_after: next.len(),
            removed,
        });
        self.current = next;
        Ok(Some(self.current.indices().to_vec()))
    }

    fn after_step(&mut self, cache: &mut KvCache, rows: &[LastQueryRow]) -> Result<()> {
        if !self.cfg.prune_during_generation {
            return Ok(());
        }
        for row in rows {
            if !self.is_fine_layer(row.layer) {
                continue;
            }
            let last = *row.positions.last().expect("row includes the new token");
            let protected = row
                .positions
                .iter()
                .map(|&p| self.protection_of(p, last))
                .collect();
            let set = ActiveSet::new(row.positions.clone(), protected)?;
            let scores = ImportanceScores {
                positions: row.positions.clone(),
                scores: row.scores.clone(),
            };
            let (next, removed) = apply_fine_with(
                self.fine_strategy,
                &scores,
                &set,
                self.cfg.fine_ratio,
                self.min_active,
                &mut self.rng,
            )?;
            if removed.is_empty() {
                continue;
            }
            cache.retain(row.layer - 1, next.indices())?;
            self.log.generation_decisions.push(LayerDecision {
                layer: row.layer,
                stage: Stage::Fine,
                active_before: set.len(),
                active_after: next.len(),
                removed,
            });
        }
        Ok(())
    }
}
