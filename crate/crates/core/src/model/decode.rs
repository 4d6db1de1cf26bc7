use super::cache::KvCache;
use super::forward::{forward_pruned_step, prefill, AttentionAudit, LayerPruner};
use super::sequence::TokenSequence;
use super::weights::ModelWeights;
use crate::error::{Error, Result};

/// Index of the largest logit; the lowest index wins ties.
pub fn argmax(logits: &[f64]) -> u32 {
    let mut best = 0;
    for (i, v) in logits.iter().enumerate() {
        if *v > logits[best] {
            best = i;
        }
    }
    best as u32
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub tokens: Vec<u32>,
    /// Positions processed at each layer during prefill.
    pub prefill_active_counts: Vec<usize>,
    /// Cache after the final step.
    pub cache: KvCache,
}

/// Greedy decoding: prefill (with optional pruning), then up to `max_steps`
/// generated tokens over the compacted cache.
pub fn decode(
    weights: &ModelWeights,
    sequence: &TokenSequence,
    max_steps: usize,
    mut pruner: Option<&mut dyn LayerPruner>,
    mut audit: Option<&mut dyn AttentionAudit>,
) -> Result<DecodeOutput> {
    if max_steps == 0 {
        return Err(Error::config("max_steps must be at least 1"));
    }
    let end = weights.config().end_token;
    let pre = prefill(
        weights,
        sequence,
        pruner.as_mut().map(|p| &mut **p as _),
        audit.as_mut().map(|a| &mut **a as _),
    )?;
    let mut cache = pre.cache;
    let mut token = argmax(&pre.logits);
    let mut tokens = vec![token];
    let mut position = sequence.len();
    while tokens.len() < max_steps && Some(token) != end {
        let active: Vec<Vec<usize>> = (0..cache.num_layers())
            .map(|l| cache.layer(l).positions().to_vec())
            .collect();
        let step = forward_pruned_step(
            weights,
            &mut cache,
            token,
            position,
            &active,
            audit.as_mut().map(|a| &mut **a as _),
        )?;
        if let Some(pr) = pruner.as_mut() {
            pr.after_step(&mut cache, &step.last_query_rows)?;
        }
        token = argmax(&step.logits);
        tokens.push(token);
        position += 1;
    }
    Ok(DecodeOutput {
        tokens,
        prefill_active_counts: pre.active_counts,
        cache,
    })
}

/// Greedy token ids only.
pub fn decode_greedy(
    weights: &ModelWeights,
    sequence: &TokenSequence,
    max_steps: usize,
    pruner: Option<&mut dyn LayerPruner>,
) -> Result<Vec<u32>> {
    decode(weights, sequence, max_steps, pruner, None).map(|o| o.tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, -1.0]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }
}
