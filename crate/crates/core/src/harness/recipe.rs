use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TokenSequence;

/// Partition of the token-id space.
///
/// Ordinary ids come first and are split in thirds between visual, audio
/// and text tokens; then `needles` needle ids, `needles` answer ids, and
/// finally a single question id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub size: usize,
    pub needles: usize,
}

impl Vocabulary {
    pub fn new(size: usize, needles: usize) -> Result<Self> {
        if size < 2 * needles + 4 {
            return Err(Error::config(format!(
                "vocabulary of {size} too small for {needles} needles"
            )));
        }
        Ok(Self { size, needles })
    }

    pub fn ordinary(&self) -> usize {
        self.size - 2 * self.needles - 1
    }

    pub fn needle_id(&self, j: usize) -> u32 {
        (self.ordinary() + j) as u32
    }

    pub fn answer_id(&self, j: usize) -> u32 {
        (self.ordinary() + self.needles + j) as u32
    }

    pub fn question_id(&self) -> u32 {
        (self.size - 1) as u32
    }

    fn band(&self, which: usize) -> std::ops::Range<u32> {
        let third = (self.ordinary() / 3).max(1);
        let lo = (which * third).min(self.ordinary() - 1);
        let hi = if which == 2 {
            self.ordinary()
        } else {
            lo + third
        };
        lo as u32..hi.max(lo + 1) as u32
    }
}

/// Shape of a synthetic prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum SequenceRecipe {
    /// Visual block, audio block, text block.
    Contiguous {
        visual: usize,
        audio: usize,
        text: usize,
    },
    /// `frames` frames of visual-then-audio tokens, then text.
    FrameInterleaved {
        frames: usize,
        visual_per_frame: usize,
        audio_per_frame: usize,
        text: usize,
    },
}

impl Default for SequenceRecipe {
    fn default() -> Self {
        SequenceRecipe::Contiguous {
            visual: 64,
            audio: 40,
            text: 12,
        }
    }
}

impl SequenceRecipe {
    /// `(M, U, E)`.
    pub fn counts(&self) -> (usize, usize, usize) {
        match *self {
            SequenceRecipe::Contiguous {
                visual,
                audio,
                text,
            } => (visual, audio, text),
            SequenceRecipe::FrameInterleaved {
                frames,
                visual_per_frame,
                audio_per_frame,
                text,
            } => (frames * visual_per_frame, frames * audio_per_frame, text),
        }
    }

    pub fn len(&self) -> usize {
        let (m, u, e) = self.counts();
        m + u + e
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Deterministic synthetic prompt. Visual, audio and text tokens draw from
/// disjoint id bands.
pub fn gen_sequence(
    recipe: &SequenceRecipe,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<TokenSequence> {
    if recipe.is_empty() {
        return Err(Error::input("sequence recipe yields zero tokens"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |band: usize, n: usize| -> Vec<u32> {
        let r = vocab.band(band);
        (0..n).map(|_| rng.gen_range(r.clone())).collect()
    };
    match *recipe {
        SequenceRecipe::Contiguous {
            visual,
            audio,
            text,
        } => {
            let v = draw(0, visual);
            let a = draw(1, audio);
            let t = draw(2, text);
            TokenSequence::contiguous(&v, &a, &t)
        }
        SequenceRecipe::FrameInterleaved {
            frames,
            visual_per_frame,
            audio_per_frame,
            text,
        } => {
            let fr: Vec<(Vec<u32>, Vec<u32>)> = (0..frames)
                .map(|_| (draw(0, visual_per_frame), draw(1, audio_per_frame)))
                .collect();
            let t = draw(2, text);
            TokenSequence::interleaved(&fr, &t)
        }
    }
}
