//! Planted-needle correctness probe.
//!
//! A needle token hidden early in the visual/audio stream determines the
//! first generated answer. The circuit lives in a block of reserved model
//! dimensions that the random weights neither read nor write:
//!
//! * the question token carries a query marker, needle tokens a key marker
//!   plus a one-hot needle identity;
//! * head 0 of every layer matches query marker against key marker, so the
//!   last query attends almost entirely to the needle (which also keeps the
//!   needle at the top of last-query importance during fine pruning);
//! * in the final layer head 0 copies the identity into answer dimensions,
//!   and the unembedding reads each answer dimension out to its answer id.
//!
//! If the needle is pruned before the final layer, the readout sees nothing
//! and the answer falls back to whatever the random weights prefer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::recipe::{gen_sequence, SequenceRecipe, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{Layout, Modality, ModelWeights, Span, TokenSequence};
use crate::tensor::Matrix;

const MARKER: f64 = 4.0;
const MATCH_GAIN: f64 = 4.0;
const COPY_GAIN: f64 = 1.0;
const READOUT_GAIN: f64 = 20.0;

struct Dims {
    query: usize,
    key: usize,
    identity: usize,
    answer: usize,
    base: usize,
}

fn dims(d: usize, needles: usize) -> Dims {
    let base = d - (2 + 2 * needles);
    Dims {
        query: base,
        key: base + 1,
        identity: base + 2,
        answer: base + 2 + needles,
        base,
    }
}

fn zero_rows(m: &mut Matrix, rows: std::ops::Range<usize>) {
    for r in rows {
        m.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
    }
}

fn zero_cols(m: &mut Matrix, cols: std::ops::Range<usize>) {
    for r in 0..m.rows() {
        for c in cols.clone() {
            m.set(r, c, 0.0);
        }
    }
}

/// Rewrites `weights` in place to carry the needle circuit for `vocab`.
pub fn install_needle_head(weights: &mut ModelWeights, vocab: &Vocabulary) -> Result<()> {
    let cfg = weights.config.clone();
    let n = vocab.needles;
    let d = cfg.model_dim;
    let hd = cfg.head_dim();
    if vocab.size != cfg.vocab_size {
        return Err(Error::config(format!(
            "vocabulary size {} does not match model vocabulary {}",
            vocab.size, cfg.vocab_size
        )));
    }
    if n == 0 || cfg.heads < 2 || hd < n || d < 2 + 2 * n + 2 {
        return Err(Error::config(format!(
            "needle circuit needs >= 1 needle, >= 2 heads, head_dim >= needles and spare width; \
             got needles={n}, heads={}, head_dim={hd}, model_dim={d}",
            cfg.heads
        )));
    }
    let dm = dims(d, n);
    let last = cfg.layers - 1;
    for (l, lw) in weights.layers.iter_mut().enumerate() {
        for w in [&mut lw.wq, &mut lw.wk, &mut lw.wv] {
            zero_rows(w, dm.base..d);
            zero_cols(w, 0..hd);
        }
        zero_rows(&mut lw.wo, 0..hd);
        zero_cols(&mut lw.wo, dm.base..d);
        zero_rows(&mut lw.w_up, dm.base..d);
        zero_cols(&mut lw.w_down, dm.base..d);
        lw.wq.set(dm.query, 0, MATCH_GAIN);
        lw.wk.set(dm.key, 0, MATCH_GAIN);
        if l == last {
            for j in 0..n {
                lw.wv.set(dm.identity + j, j, 1.0);
                lw.wo.set(j, dm.answer + j, COPY_GAIN);
            }
        }
    }
    zero_cols(&mut weights.embed, dm.base..d);
    for j in 0..n {
        let row = vocab.needle_id(j) as usize;
        weights.embed.set(row, dm.key, MARKER);
        weights.embed.set(row, dm.identity + j, MARKER);
    }
    weights
        .embed
        .set(vocab.question_id() as usize, dm.query, MARKER);
    zero_rows(&mut weights.unembed, dm.base..d);
    for j in 0..n {
        weights
            .unembed
            .set(dm.answer + j, vocab.answer_id(j) as usize, READOUT_GAIN);
    }
    weights.reserved_dims = d - dm.base;
    Ok(())
}

/// Where the needle goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeedlePlacement {
    /// Uniformly within the first `fraction_pct` percent of the visual
    /// tokens (contiguous) or of the first frame (interleaved).
    Early {
        fraction_pct: usize,
    },
    At {
        position: usize,
    },
}

impl Default for NeedlePlacement {
    fn default() -> Self {
        NeedlePlacement::Early { fraction_pct: 25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedleTask {
    pub sequence: TokenSequence,
    pub expected_answer: u32,
    pub needle_position: usize,
    pub needle: usize,
}

/// Builds a prompt whose last token is the question and which carries one
/// needle at the requested position.
pub fn gen_needle_task(
    recipe: &SequenceRecipe,
    vocab: &Vocabulary,
    seed: u64,
    placement: NeedlePlacement,
) -> Result<NeedleTask> {
    let base = gen_sequence(recipe, vocab, seed)?;
    let k = base.len();
    let (m, _, e) = recipe.counts();
    if e == 0 {
        return Err(Error::input(
            "needle tasks need at least one text token for the question",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e65_6564_6c65);
    let position = match placement {
        NeedlePlacement::At { position } => position,
        NeedlePlacement::Early { fraction_pct } => {
            let region = match base.layout() {
                Layout::Contiguous => m,
                Layout::FrameInterleaved { .. } => base.layout().frame_size().unwrap_or(0),
            };
            let hi = (region * fraction_pct / 100).max(1);
            if region == 0 {
                return Err(Error::input("no visual/audio region to hide a needle in"));
            }
            rng.gen_range(0..hi)
        }
    };
    if position + 1 >= k {
        return Err(Error::input(format!(
            "needle position {position} must precede the question at {}",
            k - 1
        )));
    }
    let needle = rng.gen_range(0..vocab.needles);
    let mut tokens = base.tokens().to_vec();
    tokens[position] = vocab.needle_id(needle);
    tokens[k - 1] = vocab.question_id();
    let spans: Vec<Span> = base.spans().to_vec();
    debug_assert_eq!(spans.last().map(|s| s.modality), Some(Modality::Text));
    Ok(NeedleTask {
        sequence: TokenSequence::new(tokens, spans, base.layout())?,
        expected_answer: vocab.answer_id(needle),
        needle_position: position,
        needle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{decode_greedy, init_model, ModelConfig};

    fn small() -> (ModelWeights, Vocabulary) {
        let cfg = ModelConfig {
            layers: 4,
            heads: 4,
            model_dim: 32,
            ffn_dim: 64,
            vocab_size: 64,
            seed: 5,
            end_token: None,
        };
        let vocab = Vocabulary::new(64, 4).unwrap();
        let mut w = init_model(&cfg).unwrap();
        install_needle_head(&mut w, &vocab).unwrap();
        (w, vocab)
    }

    #[test]
    fn vanilla_emits_the_planted_answer() {
        let (w, vocab) = small();
        let recipe = SequenceRecipe::Contiguous {
            visual: 12,
            audio: 6,
            text: 4,
        };
        for seed in 0..10 {
            let task = gen_needle_task(&recipe, &vocab, seed, NeedlePlacement::default()).unwrap();
            let out = decode_greedy(&w, &task.sequence, 1, None).unwrap();
            assert_eq!(out[0], task.expected_answer, "seed {seed}");
        }
    }

    #[test]
    fn placement_rules() {
        let vocab = Vocabulary::new(64, 4).unwrap();
        let recipe = SequenceRecipe::Contiguous {
            visual: 8,
            audio: 2,
            text: 2,
        };
        let t = gen_needle_task(&recipe, &vocab, 0, NeedlePlacement::At { position: 5 }).unwrap();
        assert_eq!(t.needle_position, 5);
        assert_eq!(t.sequence.tokens()[5], vocab.needle_id(t.needle));
        assert_eq!(*t.sequence.tokens().last().unwrap(), vocab.question_id());
        assert!(matches!(
            gen_needle_task(&recipe, &vocab, 0, NeedlePlacement::At { position: 12 }),
            Err(Error::Input(_))
        ));
        let early = gen_needle_task(&recipe, &vocab, 3, NeedlePlacement::default()).unwrap();
        assert!(early.needle_position < 2);
    }

    #[test]
    fn rejects_narrow_models() {
        let cfg = ModelConfig {
            layers: 2,
            heads: 1,
            model_dim: 16,
            ffn_dim: 16,
            vocab_size: 64,
            seed: 0,
            end_token: None,
        };
        let mut w = init_model(&cfg).unwrap();
        assert!(install_needle_head(&mut w, &Vocabulary::new(64, 4).unwrap()).is_err());
    }
}
