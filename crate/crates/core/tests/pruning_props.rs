//! Invariants of the global stage, fine stage and the prefill pipeline.

use avprune::harness::{gen_sequence, SequenceRecipe, Vocabulary};
use avprune::model::{init_model, prefill, Modality, ModelConfig, TokenSequence};
use avprune::pruning::{
    apply_fine, apply_global, fine_scores, removal_count, ActiveSet, Pipeline, PruneConfig,
    Retention, Stage,
};
use proptest::prelude::*;

fn contiguous(m: usize, u: usize, e: usize) -> TokenSequence {
    TokenSequence::contiguous(&vec![1; m], &vec![2; u], &vec![3; e]).unwrap()
}

fn count_in(seq: &TokenSequence, idx: &[usize], m: Modality) -> usize {
    idx.iter()
        .filter(|&&p| seq.modality_at(p) == Some(m))
        .count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn global_keep_first_audio(m in 0usize..40, u in 0usize..40, e in 1usize..8, k in 0usize..15, cut in 0usize..100) {
        let seq = contiguous(m, u, e);
        let cutoff = cut.min(seq.len());
        let cfg = PruneConfig { retention: Retention::KeepFirstAudio { k }, ..PruneConfig::default() };
        let a = apply_global(&seq, cutoff, &cfg).unwrap();
        let idx = a.indices();
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(count_in(&seq, idx, Modality::Audio), k.min(u));
        prop_assert_eq!(count_in(&seq, idx, Modality::Text), e);
        prop_assert_eq!(count_in(&seq, idx, Modality::Visual), m.min(cutoff));
        for &p in idx {
            if seq.modality_at(p) == Some(Modality::Audio) {
                prop_assert!(p < m + k);
                prop_assert!(a.is_protected(p));
            }
        }
        prop_assert!(a.is_protected(seq.len() - 1));
    }

    #[test]
    fn global_keep_first_frames(frames in 1usize..8, v in 1usize..4, au in 0usize..3, e in 1usize..4, k in 0usize..6, cut in 0usize..60) {
        let fr: Vec<(Vec<u32>, Vec<u32>)> = (0..frames).map(|_| (vec![1; v], vec![2; au])).collect();
        let seq = TokenSequence::interleaved(&fr, &vec![3; e]).unwrap();
        let cutoff = cut.min(seq.len());
        let cfg = PruneConfig { retention: Retention::KeepFirstFrames { k }, ..PruneConfig::default() };
        let a = apply_global(&seq, cutoff, &cfg).unwrap();
        for p in 0..seq.len() {
            let mm = seq.modality_at(p).unwrap().is_multimodal();
            // retention decides every frame, whatever the cutoff
            let expect = !mm || seq.frame_of(p).unwrap() < k;
            prop_assert_eq!(a.contains(p), expect, "position {}", p);
        }
    }

    #[test]
    fn fine_stage_invariants(
        n in 1usize..64,
        weights in prop::collection::vec(1u32..5, 64),
        protect in prop::collection::vec(any::<bool>(), 64),
        pct in 0usize..100,
        min_active in 1usize..20,
    ) {
        let positions: Vec<usize> = (0..n).map(|i| 3 * i + 1).collect();
        let total: u32 = weights[..n].iter().sum();
        let row: Vec<f64> = weights[..n].iter().map(|w| *w as f64 / total as f64).collect();
        let active = ActiveSet::new(positions.clone(), protect[..n].to_vec()).unwrap();
        let scores = fine_scores(&positions, &row).unwrap();
        let cfg = PruneConfig { fine_ratio: pct as f64 / 100.0, ..PruneConfig::default() };
        let out = apply_fine(&scores, &active, &cfg, min_active).unwrap();

        let removed = active.len() - out.len();
        let want = removal_count(cfg.fine_ratio, active.n_prunable()).min(active.len().saturating_sub(min_active));
        prop_assert_eq!(removed, want);
        for p in active.protected_positions() {
            prop_assert!(out.contains(p));
        }
        prop_assert!(out.indices().iter().all(|p| active.contains(*p)));
        prop_assert!(out.len() >= min_active.min(active.len()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pipeline_shrinks_monotonically_and_keeps_protected(
        seed in 0u64..500,
        v in 4usize..24,
        u in 0usize..16,
        e in 1usize..6,
        cut in 0usize..40,
        pct in 0usize..50,
    ) {
        let cfg_m = ModelConfig { layers: 6, heads: 2, model_dim: 16, ffn_dim: 32, vocab_size: 64, seed, end_token: None };
        let w = init_model(&cfg_m).unwrap();
        let recipe = SequenceRecipe::Contiguous { visual: v, audio: u, text: e };
        let seq = gen_sequence(&recipe, &Vocabulary::new(64, 4).unwrap(), seed).unwrap();
        let k = seq.len();
        let cfg = PruneConfig { fine_ratio: pct as f64 / 100.0, ..PruneConfig::default() };
        let mut p = Pipeline::new(&seq, 6, cut.min(k), &cfg).unwrap();
        let out = prefill(&w, &seq, Some(&mut p), None).unwrap();

        let counts = &out.active_counts;
        prop_assert_eq!(counts.len(), 6);
        prop_assert!(counts[..3].iter().all(|&c| c == k));
        prop_assert!(counts.windows(2).all(|c| c[0] >= c[1]));
        prop_assert!(*counts.last().unwrap() >= cfg.min_active_for(&seq).min(k));

        let d = &p.decisions().decisions;
        prop_assert_eq!(d[0].stage, Stage::Global);
        prop_assert_eq!(d[0].layer, 3);
        for (l, c) in counts.iter().enumerate() {
            prop_assert_eq!(out.cache.layer(l).positions().len(), *c);
        }
        for dec in d {
            prop_assert_eq!(dec.active_after, dec.active_before - dec.removed.len());
            prop_assert_eq!(out.cache.layer(dec.layer).positions().len(), dec.active_after);
        }
        let last = out.cache.layer(5).positions();
        for pos in 0..k {
            if seq.modality_at(pos) == Some(Modality::Text) {
                prop_assert!(last.contains(&pos));
            }
        }
    }
}

#[test]
fn no_op_pipeline_removes_nothing() {
    let seq = contiguous(10, 6, 3);
    let cfg = PruneConfig::no_op(seq.len());
    let w = init_model(&ModelConfig {
        layers: 4,
        heads: 2,
        model_dim: 16,
        ffn_dim: 16,
        vocab_size: 8,
        seed: 0,
        end_token: None,
    })
    .unwrap();
    let mut p = Pipeline::new(&seq, 4, seq.len(), &cfg).unwrap();
    let out = prefill(&w, &seq, Some(&mut p), None).unwrap();
    assert_eq!(out.active_counts, vec![19; 4]);
    assert!(p.decisions().decisions.iter().all(|d| d.removed.is_empty()));
}
