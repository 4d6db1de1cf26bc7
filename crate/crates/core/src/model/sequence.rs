use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    Visual,
    Audio,
    Text,
    Generated,
}

impl Modality {
    /// Visual and audio tokens are the only candidates for global pruning.
    pub fn is_multimodal(self) -> bool {
        matches!(self, Modality::Visual | Modality::Audio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub modality: Modality,
    pub start: usize,
    pub len: usize,
}

impl Span {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn contains(&self, pos: usize) -> bool {
        pos >= self.start && pos < self.end()
    }
}

/// How visual and audio tokens are arranged ahead of the text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// All visual tokens, then all audio tokens, then text.
    Contiguous,
    /// Per frame: `visual_per_frame` visual tokens followed by
    /// `audio_per_frame` audio tokens; text follows the last frame.
    FrameInterleaved {
        visual_per_frame: usize,
        audio_per_frame: usize,
    },
}

impl Layout {
    pub fn frame_size(&self) -> Option<usize> {
        match *self {
            Layout::Contiguous => None,
            Layout::FrameInterleaved {
                visual_per_frame,
                audio_per_frame,
            } => Some(visual_per_frame + audio_per_frame),
        }
    }
}

/// Ordered multimodal token ids with a modality span partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    tokens: Vec<u32>,
    spans: Vec<Span>,
    layout: Layout,
}

impl TokenSequence {
    pub fn new(tokens: Vec<u32>, spans: Vec<Span>, layout: Layout) -> Result<Self> {
        let seq = Self {
            tokens,
            spans,
            layout,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Visual block, audio block, text block.
    pub fn contiguous(visual: &[u32], audio: &[u32], text: &[u32]) -> Result<Self> {
        let mut b = Builder::default();
        b.push(Modality::Visual, visual);
        b.push(Modality::Audio, audio);
        b.push(Modality::Text, text);
        Self::new(b.tokens, b.spans, Layout::Contiguous)
    }

    /// Frames of `(visual, audio)` tokens; every frame must have the same
    /// per-modality counts.
    pub fn interleaved(frames: &[(Vec<u32>, Vec<u32>)], text: &[u32]) -> Result<Self> {
        let (vpf, apf) = frames
            .first()
            .map(|(v, a)| (v.len(), a.len()))
            .unwrap_or((0, 0));
        if frames.iter().any(|(v, a)| v.len() != vpf || a.len() != apf) {
            return Err(Error::input("frames have unequal token counts"));
        }
        let mut b = Builder::default();
        for (v, a) in frames {
            b.push(Modality::Visual, v);
            b.push(Modality::Audio, a);
        }
        b.push(Modality::Text, text);
        Self::new(
            b.tokens,
            b.spans,
            Layout::FrameInterleaved {
                visual_per_frame: vpf,
                audio_per_frame: apf,
            },
        )
    }

    fn validate(&self) -> Result<()> {
        let mut next = 0;
        for s in &self.spans {
            if s.len == 0 {
                return Err(Error::input(format!("empty span at {}", s.start)));
            }
            if s.start != next {
                return Err(Error::input(format!(
                    "spans do not partition the sequence: expected start {next}, got {}",
                    s.start
                )));
            }
            next = s.end();
        }
        if next != self.tokens.len() {
            return Err(Error::input(format!(
                "spans cover {next} positions but sequence has {} tokens",
                self.tokens.len()
            )));
        }
        if let Layout::FrameInterleaved {
            visual_per_frame,
            audio_per_frame,
        } = self.layout
        {
            let mm: Vec<&Span> = self
                .spans
                .iter()
                .filter(|s| s.modality.is_multimodal())
                .collect();
            let pattern: Vec<(Modality, usize)> = [
                (Modality::Visual, visual_per_frame),
                (Modality::Audio, audio_per_frame),
            ]
            .into_iter()
            .filter(|(_, n)| *n > 0)
            .collect();
            if pattern.is_empty() && !mm.is_empty() {
                return Err(Error::input("interleaved layout with zero-size frames"));
            }
            for (i, s) in mm.iter().enumerate() {
                let (m, n) = pattern[i % pattern.len().max(1)];
                if s.modality != m || s.len != n {
                    return Err(Error::input(format!(
                        "span {i} breaks the frame pattern: {:?}x{} where {:?}x{} expected",
                        s.modality, s.len, m, n
                    )));
                }
            }
            if !mm.is_empty() && !mm.len().is_multiple_of(pattern.len()) {
                return Err(Error::input("trailing partial frame"));
            }
            if mm.iter().any(|s| s.start >= self.first_non_multimodal()) {
                return Err(Error::input("multimodal span after text"));
            }
        }
        Ok(())
    }

    fn first_non_multimodal(&self) -> usize {
        self.spans
            .iter()
            .find(|s| !s.modality.is_multimodal())
            .map_or(self.tokens.len(), |s| s.start)
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn modality_at(&self, pos: usize) -> Option<Modality> {
        self.spans
            .iter()
            .find(|s| s.contains(pos))
            .map(|s| s.modality)
    }

    /// Per-position modality, in order.
    pub fn modalities(&self) -> Vec<Modality> {
        let mut out = Vec::with_capacity(self.len());
        for s in &self.spans {
            out.extend(std::iter::repeat_n(s.modality, s.len));
        }
        out
    }

    pub fn count(&self, modality: Modality) -> usize {
        self.spans
            .iter()
            .filter(|s| s.modality == modality)
            .map(|s| s.len)
            .sum()
    }

    /// Zero-based frame index of a multimodal position under the
    /// interleaved layout.
    pub fn frame_of(&self, pos: usize) -> Option<usize> {
        let size = self.layout.frame_size()?;
        match self.modality_at(pos) {
            Some(m) if m.is_multimodal() => Some(pos / size),
            _ => None,
        }
    }

    pub fn frame_count(&self) -> usize {
        match self.layout.frame_size() {
            Some(size) if size > 0 => {
                (self.count(Modality::Visual) + self.count(Modality::Audio)) / size
            }
            _ => 0,
        }
    }

    /// Appends a generated token, extending (or opening) the trailing
    /// `Generated` span.
    pub fn push_generated(&mut self, token: u32) {
        let pos = self.tokens.len();
        self.tokens.push(token);
        match self.spans.last_mut() {
            Some(s) if s.modality == Modality::Generated => s.len += 1,
            _ => self.spans.push(Span {
                modality: Modality::Generated,
                start: pos,
                len: 1,
            }),
        }
    }
}

#[derive(Default)]
struct Builder {
    tokens: Vec<u32>,
    spans: Vec<Span>,
}

impl Builder {
    fn push(&mut self, modality: Modality, toks: &[u32]) {
        if toks.is_empty() {
            return;
        }
        self.spans.push(Span {
            modality,
            start: self.tokens.len(),
            len: toks.len(),
        });
        self.tokens.extend_from_slice(toks);
    }
}
