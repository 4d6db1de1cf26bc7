//! Deterministic toy decoder over multimodal token sequences.

mod cache;
mod config;
mod decode;
mod forward;
mod sequence;
mod weights;

pub use cache::{KvCache, LayerCache};
pub use config::ModelConfig;
pub use decode::{argmax, decode, decode_greedy, DecodeOutput};
pub use forward::{
    forward_capture, forward_capture_audited, forward_pruned_step, prefill, AttentionAlloc,
    AttentionAudit, AttentionTensor, CaptureOutput, LastQueryRow, LayerPruner, PrefillOutput,
    ShapeAudit, StepOutput,
};
pub use sequence::{Layout, Modality, Span, TokenSequence};
pub use weights::{init_model, LayerWeights, ModelWeights};
