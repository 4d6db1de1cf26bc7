//! Streaming prefill and cached decode steps against full capture mode.

use avprune::harness::{gen_sequence, SequenceRecipe, Vocabulary};
use avprune::model::{
    forward_capture, forward_pruned_step, init_model, prefill, Layout, Modality, ModelConfig, Span,
    TokenSequence,
};
use proptest::prelude::*;

fn cfg(layers: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        layers,
        heads: 4,
        model_dim: 32,
        ffn_dim: 48,
        vocab_size: 64,
        seed,
        end_token: None,
    }
}

fn text_only(tokens: Vec<u32>) -> TokenSequence {
    let n = tokens.len();
    TokenSequence::new(
        tokens,
        vec![Span {
            modality: Modality::Text,
            start: 0,
            len: n,
        }],
        Layout::Contiguous,
    )
    .unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prefill_then_steps_match_capture(
        layers in prop::sample::select(vec![2usize, 4, 6]),
        seed in 0u64..1000,
        tokens in prop::collection::vec(0u32..64, 2..=32),
        steps in 1usize..4,
    ) {
        let w = init_model(&cfg(layers, seed)).unwrap();
        let k = tokens.len().saturating_sub(steps).max(1);
        let full = text_only(tokens.clone());
        let cap = forward_capture(&w, &full).unwrap();

        let pre = prefill(&w, &text_only(tokens[..k].to_vec()), None, None).unwrap();
        prop_assert!(max_diff(&pre.logits, cap.logits.row(k - 1)) < 1e-9);

        let mut cache = pre.cache;
        for (pos, &t) in tokens.iter().enumerate().skip(k) {
            let active: Vec<Vec<usize>> = (0..layers).map(|l| cache.layer(l).positions().to_vec()).collect();
            let step = forward_pruned_step(&w, &mut cache, t, pos, &active, None).unwrap();
            prop_assert!(max_diff(&step.logits, cap.logits.row(pos)) < 1e-9, "position {}", pos);
        }
    }

    #[test]
    fn later_tokens_do_not_affect_earlier_logits(
        seed in 0u64..1000,
        tokens in prop::collection::vec(0u32..64, 3..=24),
        at in any::<prop::sample::Index>(),
        replacement in 0u32..64,
    ) {
        let w = init_model(&cfg(4, seed)).unwrap();
        let j = 1 + at.index(tokens.len() - 1);
        let mut changed = tokens.clone();
        changed[j] = replacement;
        let a = forward_capture(&w, &text_only(tokens)).unwrap();
        let b = forward_capture(&w, &text_only(changed)).unwrap();
        for r in 0..j {
            prop_assert_eq!(a.logits.row(r), b.logits.row(r));
        }
    }
}

#[test]
fn captured_attention_is_stochastic_and_causal() {
    let w = init_model(&ModelConfig::default()).unwrap();
    let seq = gen_sequence(
        &SequenceRecipe::default(),
        &Vocabulary::new(256, 4).unwrap(),
        3,
    )
    .unwrap();
    let cap = forward_capture(&w, &seq).unwrap();
    assert_eq!(cap.attention.len(), 28);
    for (l, layer) in cap.attention.iter().enumerate() {
        assert_eq!(layer.layer, l + 1);
        assert_eq!(layer.heads.len(), 8);
        for h in &layer.heads {
            assert_eq!(h.shape(), (116, 116));
            assert!(h.is_causal());
            assert!(h.is_row_stochastic(1e-12));
        }
    }
}

#[test]
fn out_of_vocabulary_token_is_rejected() {
    let w = init_model(&cfg(2, 0)).unwrap();
    assert!(forward_capture(&w, &text_only(vec![1, 64])).is_err());
    assert!(prefill(&w, &text_only(vec![70]), None, None).is_err());
}

#[test]
fn weights_are_seed_deterministic() {
    let a = forward_capture(&init_model(&cfg(2, 9)).unwrap(), &text_only(vec![1, 2, 3])).unwrap();
    let b = forward_capture(&init_model(&cfg(2, 9)).unwrap(), &text_only(vec![1, 2, 3])).unwrap();
    let c = forward_capture(&init_model(&cfg(2, 10)).unwrap(), &text_only(vec![1, 2, 3])).unwrap();
    assert_eq!(a.logits, b.logits);
    assert_ne!(a.logits, c.logits);
}
